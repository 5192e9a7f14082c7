//! Synchronous round executor, metrics, and the iteration-map diagnostic.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::admm::{AdmmParams, Agent, AgentState, LocalResiduals, Message, Proposal};
use crate::error::{Error, Result};
use crate::oracle::{DenseMatrix, DenseVector, LsqSolution};
use crate::reformulation::CompiledProblem;

/// Above this `delta_w` a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
/// Default cap on the state dimension for [`linearize_iteration`].
pub const DEFAULT_DIM_CAP: usize = 400;

/// Stacked state `w`: every `x_i` by ascending agent, then for each active
/// edge `(i, j)`, `i < j`: `y_ij, λ_ij, y_ji, λ_ji`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub w: DenseVector,
    pub s: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub iter: usize,
    pub primal_inf: f64,
    pub consensus_inf: f64,
    pub delta_w: f64,
    pub cost: f64,
    pub cost_gap: Option<f64>,
    pub err_x: Option<f64>,
    pub messages: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    Diverged,
}

impl Termination {
    /// Process exit status for the command line.
    pub fn exit_code(self) -> i32 {
        match self {
            Termination::Converged => 0,
            Termination::MaxIters => 2,
            Termination::Diverged => 4,
        }
    }
}

/// Reference values from the centralized solve.
#[derive(Debug, Clone)]
pub struct OracleTarget {
    pub psi_opt: f64,
    /// Each agent's `z̄_i*`, only when the solution is unique.
    pub z_copies: Option<Vec<DenseVector>>,
}

impl OracleTarget {
    pub fn new(compiled: &CompiledProblem, sol: &LsqSolution) -> Self {
        Self {
            psi_opt: sol.psi_opt,
            z_copies: sol.unique.then(|| compiled.z_copies(&sol.z_star)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Record every `decimation`-th round (the last round is always kept).
    pub decimation: usize,
    pub oracle: Option<OracleTarget>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            threads: None,
            decimation: 1,
            oracle: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub termination: Termination,
    pub rounds: usize,
    /// Recorded (decimated) rounds.
    pub metrics: Vec<RoundMetrics>,
    pub last: RoundMetrics,
}

pub struct Simulation<'a> {
    compiled: &'a CompiledProblem,
    params: AdmmParams,
    agents: Vec<Agent<'a>>,
    pool: Option<rayon::ThreadPool>,
    options: SimOptions,
    compute_time: Vec<Duration>,
}

struct StepStats {
    residuals: Vec<LocalResiduals>,
    messages: usize,
}

impl<'a> Simulation<'a> {
    pub fn new(compiled: &'a CompiledProblem, params: &AdmmParams, options: SimOptions) -> Result<Self> {
        if options.decimation == 0 {
            return Err(Error::Parameter("decimation must be at least 1".into()));
        }
        let pool = match options.threads {
            Some(0) => return Err(Error::Parameter("thread count must be at least 1".into())),
            Some(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Parameter(e.to_string()))?,
            ),
            None => None,
        };
        let agents = compiled
            .programs
            .iter()
            .map(|p| Agent::new(p, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            compiled,
            params: params.clone(),
            compute_time: vec![Duration::ZERO; agents.len()],
            agents,
            pool,
            options,
        })
    }

    pub fn compiled(&self) -> &CompiledProblem {
        self.compiled
    }

    pub fn agent(&self, i: usize) -> &Agent<'a> {
        &self.agents[i - 1]
    }

    pub fn agent_state(&self, i: usize) -> &AgentState {
        &self.agents[i - 1].state
    }

    pub fn set_agent_state(&mut self, i: usize, state: AgentState) -> Result<()> {
        let cur = &self.agents[i - 1].state;
        let same_shape = state.x.len() == cur.x.len()
            && state.edges.len() == cur.edges.len()
            && state.edges.iter().zip(&cur.edges).all(|(a, b)| {
                a.neighbor == b.neighbor && a.y.len() == b.y.len() && a.lambda.len() == b.lambda.len()
            });
        if !same_shape {
            return Err(Error::Parameter(format!("state of agent {i} does not match its layout")));
        }
        self.agents[i - 1].state = state;
        Ok(())
    }

    /// Accumulated compute time of each agent (index `i - 1`).
    pub fn compute_time(&self) -> &[Duration] {
        &self.compute_time
    }

    pub fn round(&self) -> usize {
        self.agents.first().map_or(0, |a| a.state.s)
    }

    fn in_pool<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(p) => p.install(f),
            None => f(),
        }
    }

    fn step(&mut self) -> Result<StepStats> {
        let agents = &self.agents;
        let proposals: Vec<(Proposal, Duration)> = self.in_pool(|| {
            agents
                .par_iter()
                .map(|a| {
                    let t = Instant::now();
                    let p = a.propose();
                    (p, t.elapsed())
                })
                .collect()
        });
        let mut inboxes: Vec<Vec<Message>> = vec![Vec::new(); self.agents.len()];
        let mut messages = 0;
        for (p, _) in &proposals {
            for m in &p.outbox {
                inboxes[m.to - 1].push(m.clone());
                messages += 1;
            }
        }
        let mut times = Vec::with_capacity(proposals.len());
        let proposals: Vec<Proposal> = proposals
            .into_iter()
            .map(|(p, t)| {
                times.push(t);
                p
            })
            .collect();
        let agents = &mut self.agents;
        let pool = &self.pool;
        let absorb = || {
            agents
                .par_iter_mut()
                .zip(proposals)
                .zip(inboxes)
                .map(|((a, p), inbox)| {
                    let t = Instant::now();
                    let r = a.absorb(p, &inbox);
                    r.map(|r| (r, t.elapsed()))
                })
                .collect::<Result<Vec<_>>>()
        };
        let results = match pool {
            Some(p) => p.install(absorb),
            None => absorb(),
        }?;
        let mut residuals = Vec::with_capacity(results.len());
        for (k, (r, t)) in results.into_iter().enumerate() {
            self.compute_time[k] += times[k] + t;
            residuals.push(r);
        }
        Ok(StepStats { residuals, messages })
    }

    /// `max` over edges and shared column partitions of `‖z_l^(i) − z_l^(j)‖∞`.
    pub fn consensus_inf(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, j) in self.compiled.graph.edges() {
            let (pi, pj) = (self.compiled.program(i), self.compiled.program(j));
            let (xi, xj) = (&self.agent_state(i).x, &self.agent_state(j).x);
            for &l in &pi.coupling(j).unwrap().shared_cols {
                let ri = pi.layout.z_range(l).unwrap();
                let rj = pj.layout.z_range(l).unwrap();
                let d = (xi.rows(ri.start, ri.len()) - xj.rows(rj.start, rj.len())).amax();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// `Σ_i Ψ_i(x_i)` at the current state.
    pub fn cost(&self) -> f64 {
        self.agents.iter().map(|a| a.program.cost(&a.state.x)).sum()
    }

    /// Current `z̄_i` of every agent.
    pub fn z_copies(&self) -> Vec<DenseVector> {
        self.agents.iter().map(|a| a.program.z_part(&a.state.x)).collect()
    }

    fn metrics(&self, stats: &StepStats, start: Instant) -> RoundMetrics {
        let cost = self.cost();
        let oracle = self.options.oracle.as_ref();
        let err_x = oracle.and_then(|o| o.z_copies.as_ref()).map(|target| {
            self.z_copies()
                .iter()
                .zip(target)
                .map(|(z, t)| (z - t).amax())
                .fold(0.0, f64::max)
        });
        RoundMetrics {
            iter: self.round(),
            primal_inf: stats.residuals.iter().map(|r| r.primal_inf).fold(0.0, f64::max),
            consensus_inf: self.consensus_inf(),
            delta_w: stats.residuals.iter().map(|r| r.delta_state).fold(0.0, f64::max),
            cost,
            cost_gap: oracle.map(|o| (cost - o.psi_opt).abs()),
            err_x,
            messages: stats.messages,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        }
    }

    pub fn run(&mut self) -> Result<RunReport> {
        self.run_with(|_, _| {})
    }

    /// Runs until the stopping rule, `max_iters` or divergence. `hook` sees the
    /// simulation after every round.
    pub fn run_with(&mut self, mut hook: impl FnMut(&Simulation<'a>, &RoundMetrics)) -> Result<RunReport> {
        let start = Instant::now();
        let mut recorded = Vec::new();
        loop {
            let stats = self.step()?;
            let m = self.metrics(&stats, start);
            hook(self, &m);
            let termination = if !m.delta_w.is_finite() || m.delta_w > DIVERGENCE_LIMIT {
                Some(Termination::Diverged)
            } else if m.primal_inf <= self.params.tol_primal && m.delta_w <= self.params.tol_delta {
                Some(Termination::Converged)
            } else if m.iter >= self.params.max_iters {
                Some(Termination::MaxIters)
            } else {
                None
            };
            if termination.is_some() || m.iter.is_multiple_of(self.options.decimation) {
                recorded.push(m.clone());
            }
            if let Some(termination) = termination {
                return Ok(RunReport {
                    termination,
                    rounds: m.iter,
                    metrics: recorded,
                    last: m,
                });
            }
        }
    }

    /// Length of the stacked state.
    pub fn state_dim(&self) -> usize {
        self.agents
            .iter()
            .map(|a| a.state.x.len() + a.state.edges.iter().map(|e| 2 * e.y.len()).sum::<usize>())
            .sum()
    }

    pub fn system_state(&self) -> SystemState {
        let mut w = Vec::with_capacity(self.state_dim());
        for a in &self.agents {
            w.extend(a.state.x.iter());
        }
        for (i, j) in self.compiled.active_edges() {
            for (a, b) in [(i, j), (j, i)] {
                let e = self.agent_state(a).edge(b).unwrap();
                w.extend(e.y.iter());
                w.extend(e.lambda.iter());
            }
        }
        SystemState {
            w: DenseVector::from_vec(w),
            s: self.round(),
        }
    }

    pub fn set_system_state(&mut self, state: &SystemState) -> Result<()> {
        if state.w.len() != self.state_dim() {
            return Err(Error::Parameter(format!(
                "state has length {}, expected {}",
                state.w.len(),
                self.state_dim()
            )));
        }
        let mut off = 0;
        let mut take = |n: usize| {
            let v = state.w.rows(off, n).into_owned();
            off += n;
            v
        };
        for a in &mut self.agents {
            a.state.x = take(a.state.x.len());
            a.state.s = state.s;
        }
        for (i, j) in self.compiled.active_edges() {
            for (a, b) in [(i, j), (j, i)] {
                let st = &mut self.agents[a - 1].state;
                let e = st.edges.iter_mut().find(|e| e.neighbor == b).unwrap();
                e.y = take(e.y.len());
                e.lambda = take(e.lambda.len());
            }
        }
        Ok(())
    }

    /// One round applied to `w`: the map `w(s) ↦ w(s+1)`.
    pub fn round_map(&mut self, w: &DenseVector) -> Result<DenseVector> {
        self.set_system_state(&SystemState { w: w.clone(), s: 0 })?;
        self.step()?;
        Ok(self.system_state().w)
    }
}

/// Affine round map `w(s+1) = M w(s) + m` and the spectrum of `M`.
#[derive(Debug, Clone)]
pub struct IterationLinearization {
    pub m_mat: DenseMatrix,
    pub m_vec: DenseVector,
    pub eigenvalues: Vec<Complex<f64>>,
}

impl IterationLinearization {
    pub fn dim(&self) -> usize {
        self.m_vec.len()
    }

    pub fn apply(&self, w: &DenseVector) -> DenseVector {
        &self.m_mat * w + &self.m_vec
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest modulus among eigenvalues not within `tol` of 1.
    pub fn subdominant_modulus(&self, tol: f64) -> f64 {
        self.eigenvalues
            .iter()
            .filter(|c| (*c - Complex::new(1.0, 0.0)).norm() > tol)
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Eigenvalues with modulus above `1 − tol` that are not within `tol` of 1.
    pub fn unit_circle_violations(&self, tol: f64) -> Vec<Complex<f64>> {
        self.eigenvalues
            .iter()
            .copied()
            .filter(|c| c.norm() > 1.0 - tol && (c - Complex::new(1.0, 0.0)).norm() > tol)
            .collect()
    }
}

/// Materializes the round map column by column from unit states.
pub fn linearize_iteration(compiled: &CompiledProblem, params: &AdmmParams, cap: usize) -> Result<IterationLinearization> {
    let mut sim = Simulation::new(compiled, params, SimOptions::default())?;
    let dim = sim.state_dim();
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    let m_vec = sim.round_map(&DenseVector::zeros(dim))?;
    let mut m_mat = DenseMatrix::zeros(dim, dim);
    let mut unit = DenseVector::zeros(dim);
    for c in 0..dim {
        unit[c] = 1.0;
        let col = sim.round_map(&unit)? - &m_vec;
        m_mat.set_column(c, &col);
        unit[c] = 0.0;
    }
    let eigenvalues = m_mat.clone().complex_eigenvalues().iter().copied().collect();
    Ok(IterationLinearization {
        m_mat,
        m_vec,
        eigenvalues,
    })
}

/// Geometric fit `delta_w(s) ≈ C r^s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation of `(s, ln delta_w)`; 0 when either has no spread.
    pub correlation: f64,
    pub samples: usize,
    /// `rate` indistinguishable from 1.
    pub stalled: bool,
}

pub const MIN_RATE_SAMPLES: usize = 50;
pub const DEFAULT_RATE_FLOOR: f64 = 1e-13;

/// Least-squares slope of `ln delta_w` against the round index over the last
/// half of the rounds whose `delta_w` lies above `floor`.
pub fn fit_rate(metrics: &[RoundMetrics], floor: f64) -> Result<RateFit> {
    let usable: Vec<(f64, f64)> = metrics
        .iter()
        .filter(|m| m.delta_w > floor && m.delta_w.is_finite())
        .map(|m| (m.iter as f64, m.delta_w.ln()))
        .collect();
    if usable.len() < MIN_RATE_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_RATE_SAMPLES,
            got: usable.len(),
        });
    }
    let tail = &usable[usable.len() / 2..];
    let n = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in tail {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let correlation = if sxx > 0.0 && syy > 0.0 {
        sxy / (sxx * syy).sqrt()
    } else {
        0.0
    };
    let rate = slope.exp();
    Ok(RateFit {
        rate,
        slope,
        intercept: my - slope * mx,
        correlation,
        samples: tail.len(),
        stalled: (rate - 1.0).abs() < 1e-9,
    })
}

pub const METRICS_HEADER: &str = "iter,primal_inf,consensus_inf,delta_w,cost,cost_gap,err_x,messages,elapsed_ms";

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_metrics_csv<W: Write>(mut out: W, metrics: &[RoundMetrics]) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for m in metrics {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            m.iter,
            fmt_f(m.primal_inf),
            fmt_f(m.consensus_inf),
            fmt_f(m.delta_w),
            fmt_f(m.cost),
            m.cost_gap.map(fmt_f).unwrap_or_default(),
            m.err_x.map(fmt_f).unwrap_or_default(),
            m.messages,
            fmt_f(m.elapsed_ms),
        )?;
    }
    Ok(())
}

/// Summary written next to the metrics stream.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub termination: Termination,
    pub rounds: usize,
    pub primal_inf: f64,
    pub consensus_inf: f64,
    pub delta_w: f64,
    pub cost: f64,
    pub psi_opt: Option<f64>,
    pub cost_gap: Option<f64>,
    pub err_x: Option<f64>,
    pub rate: Option<RateFit>,
    pub max_agent_compute_ms: f64,
    /// Final `z̄_i`, agent `i` at index `i - 1`.
    pub z: Vec<Vec<f64>>,
}

impl RunSummary {
    pub fn new(sim: &Simulation, report: &RunReport, rate: Option<RateFit>) -> Self {
        let l = &report.last;
        Self {
            termination: report.termination,
            rounds: report.rounds,
            primal_inf: l.primal_inf,
            consensus_inf: l.consensus_inf,
            delta_w: l.delta_w,
            cost: l.cost,
            psi_opt: sim.options.oracle.as_ref().map(|o| o.psi_opt),
            cost_gap: l.cost_gap,
            err_x: l.err_x,
            rate,
            max_agent_compute_ms: sim
                .compute_time()
                .iter()
                .map(|d| d.as_secs_f64() * 1e3)
                .fold(0.0, f64::max),
            z: sim.z_copies().iter().map(|z| z.iter().copied().collect()).collect(),
        }
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}
