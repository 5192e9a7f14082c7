//! Prints the derived structure of the seven-agent worked layout.

use blocklsq::generators::{appendix_a, AppendixADims};
use blocklsq::problem::build_index;
use blocklsq::reformulation::compile;

fn main() -> blocklsq::Result<()> {
    let (p, g) = appendix_a(&AppendixADims::ones(), 1);
    let idx = build_index(&p)?;
    for k in 1..=p.row_count() {
        println!("R_{k} = {:?}  S(R_{k}) = {:?}", idx.r(k), idx.sr(k));
    }
    for l in 1..=p.col_count() {
        println!("C^{l} = {:?}  S(C^{l}) = {:?}", idx.c(l), idx.sc(l));
    }
    println!("coupled rows M = {:?}", idx.coupled);

    let cp = compile(&p, &g)?;
    for prog in &cp.programs {
        let lay = &prog.layout;
        println!(
            "agent {}: z̄ cols {:?}, v̄ slots {:?}, dim {}",
            lay.agent,
            lay.owned_cols(),
            lay.v_keys(),
            lay.x_dim
        );
    }
    Ok(())
}
