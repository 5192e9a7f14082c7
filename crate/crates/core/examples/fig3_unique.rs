//! Five agents, full-rank system: run ADMM and compare with the centralized solution.

use blocklsq::admm::AdmmParams;
use blocklsq::generators::{fig3, Fig3System};
use blocklsq::oracle::solve_problem;
use blocklsq::reformulation::compile;
use blocklsq::simulator::{fit_rate, OracleTarget, SimOptions, Simulation, DEFAULT_RATE_FLOOR};

fn main() -> blocklsq::Result<()> {
    let (p, g) = fig3(Fig3System::Unique);
    let cp = compile(&p, &g)?;
    let sol = solve_problem(&p);
    let opts = SimOptions {
        oracle: Some(OracleTarget::new(&cp, &sol)),
        ..SimOptions::default()
    };
    let mut sim = Simulation::new(&cp, &AdmmParams::default(), opts)?;
    let rep = sim.run()?;
    println!("{:?} after {} rounds", rep.termination, rep.rounds);
    println!("z* = {:?}", sol.z_star.as_slice());
    for (i, z) in sim.z_copies().iter().enumerate() {
        println!("agent {}: {:?}", i + 1, z.as_slice());
    }
    println!("max error {:.3e}", rep.last.err_x.unwrap_or(f64::NAN));
    let rate = fit_rate(&rep.metrics, DEFAULT_RATE_FLOOR)?;
    println!("linear rate {:.4} (corr {:.4})", rate.rate, rate.correlation);
    Ok(())
}
