//! Per-agent proximal ADMM.
//!
//! One round for agent `i`, given its state `(x_i, y_ij, λ_ij)` at round `s`:
//!
//! ```text
//! x_i(s+1)  = −Q̂_i⁻¹ q̂_i(s),   q̂_i = q_i − G_i x_i(s) − Σ_j E_ijᵀ(ρ(y_ij + e_ij) + λ_ij)
//! p_ij      = E_ij x_i(s+1) − e_ij − λ_ij(s)/ρ            (sent to j)
//! y_ij(s+1) = ½(p_ij + p_ji)
//! λ_ij(s+1) = λ_ij(s) − ρ(E_ij x_i(s+1) − e_ij − y_ij(s+1))
//! ```
//!
//! `Q̂_i = Q_i + G_i + ρ Σ_j E_ijᵀE_ij` does not change between rounds and is
//! factorized once.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::oracle::{DenseMatrix, DenseVector, SpdFactor, DEFAULT_PIVOT_TOL};
use crate::reformulation::{AgentProgram, Coupling};

/// Choice of the proximal weight `G_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum GPolicy {
    /// `G_i = 0`, falling back to a shift when `Q̂_i` is singular.
    Zero,
    /// Always `G_i = eps_shift · (1 + max diag) · I`.
    EpsilonShift,
    /// Per-agent nonnegative diagonal.
    Explicit(BTreeMap<usize, DenseVector>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmParams {
    pub rho: f64,
    pub g_policy: GPolicy,
    pub eps_shift: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_delta: f64,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            g_policy: GPolicy::Zero,
            eps_shift: 1e-4,
            max_iters: 20_000,
            tol_primal: 1e-10,
            tol_delta: 1e-10,
        }
    }
}

impl AdmmParams {
    pub fn check(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("rho", self.rho)?;
        positive("eps_shift", self.eps_shift)?;
        if !(self.tol_primal >= 0.0 && self.tol_delta >= 0.0) {
            return Err(Error::Parameter("tolerances must be nonnegative".into()));
        }
        if let GPolicy::Explicit(diags) = &self.g_policy {
            for (i, d) in diags {
                if d.iter().any(|&g| !(g >= 0.0 && g.is_finite())) {
                    return Err(Error::Parameter(format!("G diagonal of agent {i} must be nonnegative")));
                }
            }
        }
        Ok(())
    }
}

/// Round-invariant system matrix and its Cholesky factor.
#[derive(Debug, Clone)]
pub struct FactorizedQhat {
    pub qhat: DenseMatrix,
    pub factor: SpdFactor,
    /// Diagonal of the `G_i` actually used.
    pub g_diag: DenseVector,
    /// Whether the epsilon shift was applied.
    pub shifted: bool,
}

pub fn precompute(program: &AgentProgram, params: &AdmmParams) -> Result<FactorizedQhat> {
    let n = program.layout.x_dim;
    let mut base = program.q_mat.clone();
    for c in &program.couplings {
        base += c.e_mat.transpose() * &c.e_mat * params.rho;
    }
    let agent = program.agent();
    let shift = |base: &DenseMatrix| {
        let maxdiag = base.diagonal().amax();
        DenseVector::from_element(n, params.eps_shift * (1.0 + maxdiag))
    };
    let with = |g: &DenseVector| {
        let mut q = base.clone();
        for r in 0..n {
            q[(r, r)] += g[r];
        }
        q
    };
    let (g_diag, first_try_shifted) = match &params.g_policy {
        GPolicy::Zero => (DenseVector::zeros(n), false),
        GPolicy::EpsilonShift => (shift(&base), true),
        GPolicy::Explicit(diags) => {
            let d = diags.get(&agent).cloned().unwrap_or_else(|| DenseVector::zeros(n));
            if d.len() != n {
                return Err(Error::Parameter(format!(
                    "G diagonal of agent {agent} has length {}, expected {n}",
                    d.len()
                )));
            }
            (d, false)
        }
    };
    let qhat = with(&g_diag);
    match SpdFactor::new(&qhat, DEFAULT_PIVOT_TOL) {
        Ok(factor) => Ok(FactorizedQhat {
            qhat,
            factor,
            g_diag,
            shifted: first_try_shifted,
        }),
        Err(_) if !first_try_shifted => {
            let g_diag = &g_diag + shift(&base);
            let qhat = with(&g_diag);
            let factor = SpdFactor::new(&qhat, DEFAULT_PIVOT_TOL).map_err(|_| Error::Factorization {
                agent,
                shift: params.eps_shift,
            })?;
            Ok(FactorizedQhat {
                qhat,
                factor,
                g_diag,
                shifted: true,
            })
        }
        Err(_) => Err(Error::Factorization {
            agent,
            shift: params.eps_shift,
        }),
    }
}

/// Dual and consensus variables of one edge, held by one endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeState {
    pub neighbor: usize,
    pub y: DenseVector,
    pub lambda: DenseVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub x: DenseVector,
    /// Edges with nonempty coupling, ascending neighbor id.
    pub edges: Vec<EdgeState>,
    pub s: usize,
}

impl AgentState {
    /// `x = 0, y = 0, λ = 0`.
    pub fn zeros(program: &AgentProgram) -> Self {
        Self {
            x: DenseVector::zeros(program.layout.x_dim),
            edges: active(program)
                .map(|c| EdgeState {
                    neighbor: c.neighbor,
                    y: DenseVector::zeros(c.rows()),
                    lambda: DenseVector::zeros(c.rows()),
                })
                .collect(),
            s: 0,
        }
    }

    /// Every entry uniform in `[-scale, scale)`.
    pub fn random<R: Rng>(program: &AgentProgram, rng: &mut R, scale: f64) -> Self {
        let mut st = Self::zeros(program);
        let mut draw = |v: &mut DenseVector| v.iter_mut().for_each(|e| *e = rng.random_range(-scale..scale));
        draw(&mut st.x);
        for e in &mut st.edges {
            draw(&mut e.y);
            draw(&mut e.lambda);
        }
        st
    }

    pub fn edge(&self, j: usize) -> Option<&EdgeState> {
        self.edges.iter().find(|e| e.neighbor == j)
    }
}

fn active(program: &AgentProgram) -> impl Iterator<Item = &Coupling> {
    program.couplings.iter().filter(|c| !c.is_empty())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    /// Round being produced (`s + 1`).
    pub round: usize,
    pub payload: DenseVector,
}

pub fn x_update(state: &AgentState, program: &AgentProgram, fact: &FactorizedQhat, rho: f64) -> DenseVector {
    let mut qhat = program.q_vec.clone();
    qhat -= fact.g_diag.component_mul(&state.x);
    for (c, e) in active(program).zip(&state.edges) {
        let inner = (&e.y + &c.e_off) * rho + &e.lambda;
        qhat -= c.e_mat.transpose() * inner;
    }
    -fact.factor.solve(&qhat)
}

pub fn make_messages(state: &AgentState, program: &AgentProgram, x_new: &DenseVector, rho: f64) -> Vec<Message> {
    active(program)
        .zip(&state.edges)
        .map(|(c, e)| Message {
            from: program.agent(),
            to: c.neighbor,
            round: state.s + 1,
            payload: c.apply(x_new) - &e.lambda / rho,
        })
        .collect()
}

/// `½(own + received)`; symmetric in its arguments bit for bit.
pub fn edge_average(own: &DenseVector, received: &DenseVector) -> DenseVector {
    (own + received) * 0.5
}

/// New `y_ij` for every active edge, in edge order.
pub fn y_update(state: &AgentState, program: &AgentProgram, outbox: &[Message], inbox: &[Message]) -> Result<Vec<DenseVector>> {
    let i = program.agent();
    let round = state.s + 1;
    state
        .edges
        .iter()
        .map(|e| {
            let j = e.neighbor;
            let missing = || Error::Protocol { from: j, to: i, round };
            let own = outbox.iter().find(|m| m.to == j && m.round == round).ok_or(Error::Protocol {
                from: i,
                to: j,
                round,
            })?;
            let got = inbox
                .iter()
                .find(|m| m.from == j && m.to == i && m.round == round)
                .ok_or_else(missing)?;
            if got.payload.len() != own.payload.len() {
                return Err(missing());
            }
            Ok(edge_average(&own.payload, &got.payload))
        })
        .collect()
}

pub fn lambda_update(
    state: &AgentState,
    program: &AgentProgram,
    x_new: &DenseVector,
    y_new: &[DenseVector],
    rho: f64,
) -> Vec<DenseVector> {
    active(program)
        .zip(&state.edges)
        .zip(y_new)
        .map(|((c, e), y)| &e.lambda - (c.apply(x_new) - y) * rho)
        .collect()
}

/// Stopping metrics of one agent after a round.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalResiduals {
    /// `max_j ‖m_ij(x_i) − y_ij‖∞`
    pub primal_inf: f64,
    /// `‖x_i(s+1) − x_i(s)‖∞`
    pub delta_x: f64,
    /// Largest change of any entry of the agent's state.
    pub delta_state: f64,
}

/// Residuals of `state` (already at round `s + 1`) against `x_prev`.
pub fn local_residuals(state: &AgentState, program: &AgentProgram, x_prev: &DenseVector) -> LocalResiduals {
    let primal_inf = active(program)
        .zip(&state.edges)
        .map(|(c, e)| (c.apply(&state.x) - &e.y).amax())
        .fold(0.0, f64::max);
    LocalResiduals {
        primal_inf,
        delta_x: (&state.x - x_prev).amax(),
        delta_state: 0.0,
    }
}

/// An agent: its program, factorization and current state.
#[derive(Debug, Clone)]
pub struct Agent<'a> {
    pub program: &'a AgentProgram,
    pub fact: FactorizedQhat,
    pub state: AgentState,
    rho: f64,
}

/// Output of the first half of a round.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub x: DenseVector,
    pub outbox: Vec<Message>,
}

impl<'a> Agent<'a> {
    pub fn new(program: &'a AgentProgram, params: &AdmmParams) -> Result<Self> {
        params.check()?;
        Ok(Self {
            program,
            fact: precompute(program, params)?,
            state: AgentState::zeros(program),
            rho: params.rho,
        })
    }

    pub fn id(&self) -> usize {
        self.program.agent()
    }

    /// x-update and outgoing messages; reads only local state.
    pub fn propose(&self) -> Proposal {
        let x = x_update(&self.state, self.program, &self.fact, self.rho);
        let outbox = make_messages(&self.state, self.program, &x, self.rho);
        Proposal { x, outbox }
    }

    /// y- and λ-updates from the delivered messages; advances the round.
    pub fn absorb(&mut self, proposal: Proposal, inbox: &[Message]) -> Result<LocalResiduals> {
        let y_new = y_update(&self.state, self.program, &proposal.outbox, inbox)?;
        let lambda_new = lambda_update(&self.state, self.program, &proposal.x, &y_new, self.rho);
        let mut delta_state = (&proposal.x - &self.state.x).amax();
        for ((e, y), l) in self.state.edges.iter_mut().zip(y_new).zip(lambda_new) {
            delta_state = delta_state.max((&y - &e.y).amax()).max((&l - &e.lambda).amax());
            e.y = y;
            e.lambda = l;
        }
        let x_prev = std::mem::replace(&mut self.state.x, proposal.x);
        self.state.s += 1;
        let mut res = local_residuals(&self.state, self.program, &x_prev);
        res.delta_state = delta_state;
        Ok(res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::oracle::min_norm_lstsq;
    use crate::problem::{BlockProblem, SplitPolicy};
    use crate::reformulation::{compile, CompiledProblem};

    fn two_agent_toy() -> CompiledProblem {
        let mut p = BlockProblem::new(vec![1, 1], vec![1], 2).unwrap();
        p.add_block(1, 1, 1, DenseMatrix::from_element(1, 1, 1.0)).unwrap();
        p.add_block(2, 1, 2, DenseMatrix::from_element(1, 1, 1.0)).unwrap();
        p.set_h(1, DenseVector::from_element(1, 0.0), SplitPolicy::Owner).unwrap();
        p.set_h(2, DenseVector::from_element(1, 2.0), SplitPolicy::Owner).unwrap();
        compile(&p, &Graph::new(2, &[(1, 2)]).unwrap()).unwrap()
    }

    fn round(agents: &mut [Agent]) -> Vec<LocalResiduals> {
        let props: Vec<Proposal> = agents.iter().map(Agent::propose).collect();
        let all: Vec<Message> = props.iter().flat_map(|p| p.outbox.clone()).collect();
        agents
            .iter_mut()
            .zip(props)
            .map(|(a, p)| {
                let inbox: Vec<Message> = all.iter().filter(|m| m.to == a.id()).cloned().collect();
                a.absorb(p, &inbox).unwrap()
            })
            .collect()
    }

    #[test]
    fn isolated_agent_gets_least_squares() {
        let mut p = BlockProblem::new(vec![3], vec![2], 1).unwrap();
        let h = DenseMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 1.0]);
        let rhs = DenseVector::from_row_slice(&[1.0, 0.0, 2.0]);
        p.add_block(1, 1, 1, h.clone()).unwrap();
        p.set_h(1, rhs.clone(), SplitPolicy::Owner).unwrap();
        let cp = compile(&p, &Graph::new(1, &[]).unwrap()).unwrap();
        let params = AdmmParams::default();
        let fact = precompute(cp.program(1), &params).unwrap();
        assert!(!fact.shifted);
        let st = AgentState::zeros(cp.program(1));
        let x = x_update(&st, cp.program(1), &fact, 1.0);
        let z = min_norm_lstsq(&h, &rhs).z_star;
        assert!((x - z).amax() < 1e-12);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let cp = two_agent_toy();
        let mut prog = cp.program(1).clone();
        prog.q_vec.fill(0.0);
        let fact = precompute(&prog, &AdmmParams::default()).unwrap();
        let x = x_update(&AgentState::zeros(&prog), &prog, &fact, 1.0);
        assert_eq!(x.amax(), 0.0);
    }

    #[test]
    fn singular_local_system_is_shifted() {
        // column 2 never touched by agent 1's data or couplings
        let mut p = BlockProblem::new(vec![1], vec![1, 1], 1).unwrap();
        p.add_block(1, 1, 1, DenseMatrix::from_element(1, 1, 1.0)).unwrap();
        p.add_block(1, 2, 1, DenseMatrix::from_element(1, 1, 0.0)).unwrap();
        p.set_h(1, DenseVector::from_element(1, 1.0), SplitPolicy::Owner).unwrap();
        let cp = compile(&p, &Graph::new(1, &[]).unwrap()).unwrap();
        let fact = precompute(cp.program(1), &AdmmParams::default()).unwrap();
        assert!(fact.shifted);
        assert!(fact.g_diag.iter().all(|&g| g > 0.0));
        let forced = AdmmParams {
            g_policy: GPolicy::EpsilonShift,
            ..AdmmParams::default()
        };
        assert!(precompute(cp.program(1), &forced).unwrap().shifted);
    }

    #[test]
    fn bad_params_rejected() {
        let cp = two_agent_toy();
        for params in [
            AdmmParams {
                rho: 0.0,
                ..AdmmParams::default()
            },
            AdmmParams {
                eps_shift: -1.0,
                ..AdmmParams::default()
            },
        ] {
            assert!(matches!(Agent::new(cp.program(1), &params), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn message_payloads() {
        let cp = two_agent_toy();
        let prog = cp.program(1);
        let st = AgentState::zeros(prog);
        let x = DenseVector::from_element(1, 0.7);
        let msgs = make_messages(&st, prog, &x, 1.0);
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].payload[0], 0.7);
        assert_eq!((msgs[0].from, msgs[0].to, msgs[0].round), (1, 2, 1));
    }

    #[test]
    fn averages() {
        let m = DenseVector::from_row_slice(&[0.3, -2.0]);
        assert_eq!(edge_average(&m, &m), m);
        let one = DenseVector::from_element(1, 1.0);
        assert_eq!(edge_average(&one, &-&one)[0], 0.0);
        let a = DenseVector::from_row_slice(&[0.1, 1e-17, 3.3]);
        let b = DenseVector::from_row_slice(&[0.2, -7.0, 1e300]);
        assert_eq!(edge_average(&a, &b), edge_average(&b, &a));
    }

    #[test]
    fn scalar_dual_step() {
        let cp = two_agent_toy();
        let prog = cp.program(1);
        let st = AgentState::zeros(prog);
        let x = DenseVector::from_element(1, 2.0);
        let y = vec![DenseVector::from_element(1, 1.0)];
        let l = lambda_update(&st, prog, &x, &y, 1.0);
        assert_eq!(l[0][0], -1.0);
        // feasible edge keeps λ
        let l = lambda_update(&st, prog, &x, std::slice::from_ref(&x), 1.0);
        assert_eq!(l[0][0], 0.0);
    }

    #[test]
    fn missing_message_is_a_protocol_error() {
        let cp = two_agent_toy();
        let mut a = Agent::new(cp.program(1), &AdmmParams::default()).unwrap();
        let prop = a.propose();
        assert!(matches!(
            a.absorb(prop, &[]),
            Err(Error::Protocol { from: 2, to: 1, round: 1 })
        ));
    }

    #[test]
    fn two_agent_consensus() {
        let cp = two_agent_toy();
        let params = AdmmParams::default();
        let mut agents: Vec<Agent> = cp.programs.iter().map(|p| Agent::new(p, &params).unwrap()).collect();
        let r1 = round(&mut agents);
        let r2 = round(&mut agents);
        let p1 = r1.iter().map(|r| r.primal_inf).fold(0.0, f64::max);
        let p2 = r2.iter().map(|r| r.primal_inf).fold(0.0, f64::max);
        assert!(p1 > 0.0 && p2 < p1, "{p1} {p2}");
        for _ in 0..200 {
            round(&mut agents);
        }
        for a in &agents {
            assert!((a.state.x[0] - 1.0).abs() < 1e-10);
        }
        let l1 = &agents[0].state.edges[0].lambda;
        let l2 = &agents[1].state.edges[0].lambda;
        assert!((l1 + l2).amax() < 1e-12);
        assert_eq!(agents[0].state.edges[0].y, agents[1].state.edges[0].y);
    }

    #[test]
    fn fixed_point_residuals_vanish() {
        let cp = two_agent_toy();
        let params = AdmmParams::default();
        let mut agents: Vec<Agent> = cp.programs.iter().map(|p| Agent::new(p, &params).unwrap()).collect();
        for _ in 0..400 {
            round(&mut agents);
        }
        for r in round(&mut agents) {
            assert!(r.primal_inf < 1e-14 && r.delta_x < 1e-14);
        }
    }
}
