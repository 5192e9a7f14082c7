#![allow(dead_code)]

use blocklsq::generators::{five_agent_graph, GridSpec};
use blocklsq::graph::Graph;
use blocklsq::oracle::{DenseMatrix, DenseVector};
use blocklsq::problem::BlockProblem;

/// Second five-agent system with row 3 entry 2 read as 3.4, which makes
/// row 3 = row 2 + row 5 and the matrix rank 3.
pub fn fig3_rank3() -> (BlockProblem, Graph) {
    let a = DenseMatrix::from_row_slice(
        5,
        4,
        &[
            1.0, 2.0, 1.0, 1.0, //
            1.0, 1.4, -1.6, 2.8, //
            3.0, 3.4, -3.6, 3.8, //
            -1.0, -0.6, 0.4, 1.8, //
            2.0, 2.0, -2.0, 1.0,
        ],
    );
    let b = DenseVector::from_row_slice(&[10.0, 20.0, 15.0, 17.0, 11.0]);
    let p = BlockProblem::from_dense(&a, &b, vec![1; 5], vec![4], 5, |k, _| Some(k)).unwrap();
    (p, five_agent_graph())
}

/// The small grid used for rate and decomposition checks.
pub fn small_grid(seed: u64) -> GridSpec {
    GridSpec {
        rows: 2,
        cols: 3,
        n_local: 4,
        n_shared: 2,
        m_coupled: 2,
        seed,
    }
}

/// `½‖A z − b‖²` for a dense system.
pub fn half_sq_residual(a: &DenseMatrix, z: &DenseVector, b: &DenseVector) -> f64 {
    0.5 * (a * z - b).norm_squared()
}
