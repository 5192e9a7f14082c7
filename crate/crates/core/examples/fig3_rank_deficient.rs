//! Second five-agent system: reports oracle rank and the attained cost.

use blocklsq::admm::AdmmParams;
use blocklsq::generators::{fig3, Fig3System};
use blocklsq::oracle::solve_problem;
use blocklsq::reformulation::compile;
use blocklsq::simulator::{OracleTarget, SimOptions, Simulation};

fn main() -> blocklsq::Result<()> {
    let (p, g) = fig3(Fig3System::RankDeficient);
    let sol = solve_problem(&p);
    println!("rank {} of {}, unique {}", sol.rank, p.n(), sol.unique);
    let cp = compile(&p, &g)?;
    let opts = SimOptions {
        oracle: Some(OracleTarget::new(&cp, &sol)),
        ..SimOptions::default()
    };
    let rep = Simulation::new(&cp, &AdmmParams::default(), opts)?.run()?;
    println!(
        "{:?} after {} rounds: cost {:.12}, optimum {:.12}, consensus {:.2e}",
        rep.termination, rep.rounds, rep.last.cost, sol.psi_opt, rep.last.consensus_inf
    );
    Ok(())
}
