//! Writes a problem file, reads it back and validates the graph.

use blocklsq::generators::{grid, GridSpec};
use blocklsq::io::{parse_problem, problem_to_string};
use blocklsq::problem::validate;

fn main() -> blocklsq::Result<()> {
    let spec = GridSpec { rows: 2, cols: 2, n_local: 2, n_shared: 1, m_coupled: 1, seed: 3 };
    let (p, g) = grid(&spec)?;
    let text = problem_to_string(&p, &g)?;
    println!("{text}");
    let (p2, g2) = parse_problem(&text)?;
    assert_eq!((p2, g2.clone()), (p.clone(), g));
    let rep = validate(&p, &g2);
    for c in &rep.columns {
        println!("G^{}: nodes {:?} connected {}", c.partition, c.nodes, c.connected);
    }
    for c in &rep.rows {
        println!("G_{}: nodes {:?} connected {}", c.partition, c.nodes, c.connected);
    }
    Ok(())
}
