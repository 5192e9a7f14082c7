//! Linearizes one ADMM round and lists the largest eigenvalue moduli.

use blocklsq::admm::AdmmParams;
use blocklsq::generators::{fig3, Fig3System};
use blocklsq::reformulation::compile;
use blocklsq::simulator::{linearize_iteration, DEFAULT_DIM_CAP};

fn main() -> blocklsq::Result<()> {
    let (p, g) = fig3(Fig3System::Unique);
    let cp = compile(&p, &g)?;
    let lin = linearize_iteration(&cp, &AdmmParams::default(), DEFAULT_DIM_CAP)?;
    let mut moduli: Vec<f64> = lin.eigenvalues.iter().map(|e| e.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    println!("state dim {}", lin.dim());
    println!("top moduli {:?}", &moduli[..8.min(moduli.len())]);
    println!("subdominant {:.6}", lin.subdominant_modulus(1e-8));
    println!("off-unit-circle violations {}", lin.unit_circle_violations(1e-8).len());
    Ok(())
}
