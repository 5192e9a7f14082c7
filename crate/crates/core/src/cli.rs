//! Command-line front end.
//!
//! Exit status: 0 converged / ok, 2 iteration limit reached, 3 invalid input
//! (validation, IO, malformed file or flags), 4 divergence. `spectrum` exits
//! with 1 when the certificate does not hold.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::admm::{AdmmParams, GPolicy};
use crate::error::{Error, Result};
use crate::generators::{appendix_a, fig3, grid, AppendixADims, Fig3System, GridSpec};
use crate::graph::Graph;
use crate::io::{load_problem, problem_to_string};
use crate::oracle::solve_problem;
use crate::problem::{validate, BlockProblem};
use crate::reformulation::compile;
use crate::simulator::{
    fit_rate, linearize_iteration, write_metrics_csv, OracleTarget, RunSummary, SimOptions, Simulation,
    DEFAULT_DIM_CAP, DEFAULT_RATE_FLOOR,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CERTIFICATE: i32 = 1;
pub const EXIT_INVALID: i32 = 3;
/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "BLOCKLSQ_THREADS";

#[derive(Debug, Parser)]
#[command(name = "blocklsq", version, about = "Distributed least squares for block-partitioned linear systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the distributed iteration.
    Solve(SolveArgs),
    /// Check ownership structure and graph assumptions.
    Validate(SourceArgs),
    /// Write a generated instance as a problem file.
    Generate {
        #[command(flatten)]
        source: SourceArgs,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the affine round map and inspect its eigenvalues.
    Spectrum(SpectrumArgs),
    /// Print the centralized minimum-norm least-squares solution.
    Oracle(SourceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorName {
    Grid,
    Fig3,
    AppendixA,
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Problem file (JSON).
    #[arg(long, conflicts_with = "generator", required_unless_present = "generator")]
    pub problem: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorName>,
    #[arg(long, default_value_t = 4)]
    pub rows: usize,
    #[arg(long, default_value_t = 6)]
    pub cols: usize,
    #[arg(long, default_value_t = 20)]
    pub n_local: usize,
    /// Defaults to `--m-coupled`.
    #[arg(long)]
    pub n_shared: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub m_coupled: usize,
    /// Which five-agent system (1: unique solution, 2: second system).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub which: u8,
    /// Six row-partition sizes for appendix-a.
    #[arg(long, value_delimiter = ',', default_value = "1,1,1,1,1,1")]
    pub row_dims: Vec<usize>,
    /// Four column-partition sizes for appendix-a.
    #[arg(long, value_delimiter = ',', default_value = "1,1,1,1")]
    pub col_dims: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GChoice {
    Zero,
    Shift,
}

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, value_enum, default_value_t = GChoice::Zero)]
    pub g_policy: GChoice,
    #[arg(long, default_value_t = 1e-4)]
    pub eps_shift: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol_primal: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol_delta: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Metrics CSV output.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Summary JSON output.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub decimation: usize,
    /// Skip the centralized reference solve.
    #[arg(long)]
    pub no_oracle: bool,
    /// Also run the spectral check before solving.
    #[arg(long)]
    pub spectrum: bool,
    /// Start from uniformly random x, y, λ drawn with this seed.
    #[arg(long)]
    pub random_init: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = DEFAULT_DIM_CAP)]
    pub cap: usize,
    /// Write eigenvalues and checks as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Where a problem comes from.
#[derive(Debug, Clone)]
pub enum ProblemSource {
    File(PathBuf),
    Grid(GridSpec),
    Fig3(Fig3System),
    AppendixA(AppendixADims, u64),
}

/// Everything `solve` needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: ProblemSource,
    pub params: AdmmParams,
    pub metrics: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub decimation: usize,
    pub oracle: bool,
    pub diagnostics: bool,
    pub random_init: Option<u64>,
    pub threads: Option<usize>,
}

impl SourceArgs {
    pub fn source(&self) -> Result<ProblemSource> {
        if let Some(path) = &self.problem {
            return Ok(ProblemSource::File(path.clone()));
        }
        Ok(match self.generator.expect("clap enforces a source") {
            GeneratorName::Grid => ProblemSource::Grid(GridSpec {
                rows: self.rows,
                cols: self.cols,
                n_local: self.n_local,
                n_shared: self.n_shared.unwrap_or(self.m_coupled),
                m_coupled: self.m_coupled,
                seed: self.seed,
            }),
            GeneratorName::Fig3 => ProblemSource::Fig3(if self.which == 1 {
                Fig3System::Unique
            } else {
                Fig3System::RankDeficient
            }),
            GeneratorName::AppendixA => {
                let row_dims: [usize; 6] = self.row_dims.clone().try_into().map_err(|_| {
                    Error::Parameter("--row-dims needs exactly 6 entries".into())
                })?;
                let col_dims: [usize; 4] = self.col_dims.clone().try_into().map_err(|_| {
                    Error::Parameter("--col-dims needs exactly 4 entries".into())
                })?;
                if row_dims.contains(&0) || col_dims.contains(&0) {
                    return Err(Error::Parameter("partition sizes must be positive".into()));
                }
                ProblemSource::AppendixA(AppendixADims { row_dims, col_dims }, self.seed)
            }
        })
    }
}

impl ProblemSource {
    pub fn load(&self) -> Result<(BlockProblem, Graph)> {
        match self {
            ProblemSource::File(path) => load_problem(path),
            ProblemSource::Grid(spec) => grid(spec),
            ProblemSource::Fig3(which) => Ok(fig3(*which)),
            ProblemSource::AppendixA(dims, seed) => Ok(appendix_a(dims, *seed)),
        }
    }
}

impl ParamArgs {
    pub fn params(&self) -> AdmmParams {
        AdmmParams {
            rho: self.rho,
            g_policy: match self.g_policy {
                GChoice::Zero => GPolicy::Zero,
                GChoice::Shift => GPolicy::EpsilonShift,
            },
            eps_shift: self.eps_shift,
            max_iters: self.max_iters,
            tol_primal: self.tol_primal,
            tol_delta: self.tol_delta,
        }
    }
}

/// Worker cap from the environment.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Parameter(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

impl RunConfig {
    pub fn from_args(args: &SolveArgs) -> Result<Self> {
        Ok(Self {
            source: args.source.source()?,
            params: args.params.params(),
            metrics: args.metrics.clone(),
            summary: args.summary.clone(),
            decimation: args.decimation,
            oracle: !args.no_oracle,
            diagnostics: args.spectrum,
            random_init: args.random_init,
            threads: threads_from_env()?,
        })
    }
}

fn load_valid(source: &ProblemSource) -> Result<(BlockProblem, Graph)> {
    let (p, g) = source.load()?;
    let report = validate(&p, &g);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.passed() {
        return Err(Error::Validation(report.summary()));
    }
    Ok((p, g))
}

/// Parses arguments and runs; returns the process exit status.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Solve(args) => cmd_solve(&RunConfig::from_args(&args)?),
        Command::Validate(src) => cmd_validate(&src.source()?),
        Command::Generate { source, out } => cmd_generate(&source.source()?, out.as_ref()),
        Command::Spectrum(args) => cmd_spectrum(&args),
        Command::Oracle(src) => cmd_oracle(&src.source()?),
    }
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<i32> {
    if cfg.decimation == 0 {
        return Err(Error::Parameter("--decimation must be at least 1".into()));
    }
    cfg.params.check()?;
    let (p, g) = load_valid(&cfg.source)?;
    let compiled = compile(&p, &g)?;
    if cfg.diagnostics {
        match linearize_iteration(&compiled, &cfg.params, DEFAULT_DIM_CAP) {
            Ok(lin) => println!(
                "spectrum: dim {} radius {:.6e} subdominant {:.6e}",
                lin.dim(),
                lin.spectral_radius(),
                lin.subdominant_modulus(1e-8)
            ),
            Err(e) => eprintln!("spectrum skipped: {e}"),
        }
    }
    let oracle = cfg.oracle.then(|| OracleTarget::new(&compiled, &solve_problem(&p)));
    let options = SimOptions {
        threads: cfg.threads,
        decimation: cfg.decimation,
        oracle,
    };
    let mut sim = Simulation::new(&compiled, &cfg.params, options)?;
    if let Some(seed) = cfg.random_init {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = sim.state_dim();
        let w = crate::oracle::DenseVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        sim.set_system_state(&crate::simulator::SystemState { w, s: 0 })?;
    }
    let report = sim.run()?;
    let rate = fit_rate(&report.metrics, DEFAULT_RATE_FLOOR).ok();
    let summary = RunSummary::new(&sim, &report, rate);
    if let Some(path) = &cfg.metrics {
        let mut out = BufWriter::new(File::create(path)?);
        write_metrics_csv(&mut out, &report.metrics)?;
        out.flush()?;
    }
    if let Some(path) = &cfg.summary {
        let mut out = BufWriter::new(File::create(path)?);
        summary.write_json(&mut out)?;
        out.flush()?;
    }
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3e}"));
    println!(
        "{:?} after {} rounds: primal_inf {:.3e} consensus_inf {:.3e} cost {:.12e} cost_gap {} err_x {}",
        report.termination,
        report.rounds,
        report.last.primal_inf,
        report.last.consensus_inf,
        report.last.cost,
        opt(report.last.cost_gap),
        opt(report.last.err_x),
    );
    Ok(report.termination.exit_code())
}

pub fn cmd_validate(source: &ProblemSource) -> Result<i32> {
    let (p, g) = source.load()?;
    let report = validate(&p, &g);
    println!("graph connected: {}", report.graph_connected);
    for c in &report.columns {
        println!("G^{}: nodes {:?} connected {}", c.partition, c.nodes, c.connected);
    }
    for r in &report.rows {
        println!("G_{}: nodes {:?} connected {}", r.partition, r.nodes, r.connected);
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    for e in &report.errors {
        println!("error: {e}");
    }
    if report.passed() {
        println!("valid");
        Ok(EXIT_OK)
    } else {
        eprintln!("validation failed: {}", report.summary());
        Ok(EXIT_INVALID)
    }
}

pub fn cmd_generate(source: &ProblemSource, out: Option<&PathBuf>) -> Result<i32> {
    let (p, g) = source.load()?;
    let text = problem_to_string(&p, &g)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SpectrumReport {
    dim: usize,
    spectral_radius: f64,
    subdominant_modulus: f64,
    unit_circle_violations: usize,
    affinity_error: f64,
    certified: bool,
    eigenvalues: Vec<(f64, f64)>,
}

pub fn cmd_spectrum(args: &SpectrumArgs) -> Result<i32> {
    let params = args.params.params();
    params.check()?;
    let (p, g) = load_valid(&args.source.source()?)?;
    let compiled = compile(&p, &g)?;
    let lin = linearize_iteration(&compiled, &params, args.cap)?;
    let mut sim = Simulation::new(&compiled, &params, SimOptions::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut affinity_error: f64 = 0.0;
    for _ in 0..10 {
        let w = crate::oracle::DenseVector::from_fn(lin.dim(), |_, _| rng.random_range(-1.0..1.0));
        let err = (sim.round_map(&w)? - lin.apply(&w)).amax() / (1.0 + w.amax());
        affinity_error = affinity_error.max(err);
    }
    let tol = 1e-8;
    let violations = lin.unit_circle_violations(tol).len();
    let certified = lin.spectral_radius() <= 1.0 + tol && violations == 0 && affinity_error <= 1e-9;
    let report = SpectrumReport {
        dim: lin.dim(),
        spectral_radius: lin.spectral_radius(),
        subdominant_modulus: lin.subdominant_modulus(tol),
        unit_circle_violations: violations,
        affinity_error,
        certified,
        eigenvalues: lin.eigenvalues.iter().map(|c| (c.re, c.im)).collect(),
    };
    println!(
        "dim {} spectral radius {:.12e} subdominant {:.12e} violations {} affinity error {:.3e} certified {}",
        report.dim,
        report.spectral_radius,
        report.subdominant_modulus,
        report.unit_circle_violations,
        report.affinity_error,
        report.certified
    );
    if let Some(path) = &args.json {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), &report)?;
    }
    Ok(if certified { EXIT_OK } else { EXIT_CERTIFICATE })
}

#[derive(Serialize)]
struct OracleReport {
    rank: usize,
    unique: bool,
    psi_opt: f64,
    z_star: Vec<f64>,
}

pub fn cmd_oracle(source: &ProblemSource) -> Result<i32> {
    let (p, _) = source.load()?;
    let sol = solve_problem(&p);
    let report = OracleReport {
        rank: sol.rank,
        unique: sol.unique,
        psi_opt: sol.psi_opt,
        z_star: sol.z_star.iter().copied().collect(),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("blocklsq").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn rho_defaults_to_one() {
        let Command::Solve(a) = parse(&["solve", "--generator", "fig3"]).command else {
            panic!()
        };
        assert_eq!(a.params.params().rho, 1.0);
        assert_eq!(a.params.params(), AdmmParams::default());
    }

    #[test]
    fn grid_source_defaults() {
        let Command::Solve(a) = parse(&["solve", "--generator", "grid", "--rows", "4", "--cols", "6", "--seed", "7"]).command
        else {
            panic!()
        };
        let ProblemSource::Grid(spec) = a.source.source().unwrap() else {
            panic!()
        };
        assert_eq!(spec, GridSpec::four_by_six(7));
    }

    #[test]
    fn exactly_one_source() {
        assert!(Cli::try_parse_from(["blocklsq", "oracle"]).is_err());
        assert!(Cli::try_parse_from(["blocklsq", "oracle", "--problem", "a.json", "--generator", "fig3"]).is_err());
        assert!(Cli::try_parse_from(["blocklsq", "oracle", "--generator", "fig3", "--which", "3"]).is_err());
    }

    #[test]
    fn appendix_dims_checked() {
        let Command::Validate(s) = parse(&["validate", "--generator", "appendix-a", "--row-dims", "1,2"]).command else {
            panic!()
        };
        assert!(s.source().is_err());
        let Command::Validate(s) = parse(&["validate", "--generator", "appendix-a", "--col-dims", "2,1,1,3"]).command else {
            panic!()
        };
        assert!(matches!(s.source().unwrap(), ProblemSource::AppendixA(d, 7) if d.col_dims == [2, 1, 1, 3]));
    }
}
