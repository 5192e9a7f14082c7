//! 24-agent grid: per-round optimality gap, written as CSV to stdout.
//!
//! `cargo run --release --example grid_replica -- 500`

use blocklsq::admm::AdmmParams;
use blocklsq::generators::{grid, GridSpec};
use blocklsq::oracle::solve_problem;
use blocklsq::reformulation::compile;
use blocklsq::simulator::{write_metrics_csv, OracleTarget, SimOptions, Simulation};

fn main() -> blocklsq::Result<()> {
    let rounds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let (p, g) = grid(&GridSpec::four_by_six(7))?;
    let cp = compile(&p, &g)?;
    let opts = SimOptions {
        oracle: Some(OracleTarget::new(&cp, &solve_problem(&p))),
        decimation: 10,
        ..SimOptions::default()
    };
    let params = AdmmParams {
        max_iters: rounds,
        ..AdmmParams::default()
    };
    let mut sim = Simulation::new(&cp, &params, opts)?;
    let rep = sim.run()?;
    write_metrics_csv(std::io::stdout().lock(), &rep.metrics)?;
    let worst = sim.compute_time().iter().max().copied().unwrap_or_default();
    eprintln!("{:?}, slowest agent {:.3} s total", rep.termination, worst.as_secs_f64());
    Ok(())
}
