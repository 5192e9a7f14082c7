//! Builds a feasible point of the reformulation from the centralized minimizer.
//! Its total cost equals the centralized optimum.

use blocklsq::generators::{appendix_a, AppendixADims};
use blocklsq::oracle::solve_problem;
use blocklsq::reformulation::compile;

fn main() -> blocklsq::Result<()> {
    let (p, g) = appendix_a(&AppendixADims::ones(), 4);
    let cp = compile(&p, &g)?;
    let sol = solve_problem(&p);
    let copies = cp.z_copies(&sol.z_star);
    for &eps in &cp.index.coupled {
        for ((i, j), v) in cp.balanced_flows(eps, &copies)? {
            println!("row {eps}: v_({i},{j}) = {:?}", v.as_slice());
        }
    }
    let xs = cp.feasible_point(&sol.z_star)?;
    println!("distributed cost {:.15e}", cp.total_cost(&xs));
    println!("centralized cost {:.15e}", sol.psi_opt);
    Ok(())
}
