//! Centralized minimum-norm least squares on a small rank-deficient matrix.

use blocklsq::oracle::{min_norm_lstsq, DenseMatrix, DenseVector};

fn main() {
    let h = DenseMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 1.0, 0.0, 1.0]);
    let b = DenseVector::from_vec(vec![1.0, 1.0, 1.0]);
    let sol = min_norm_lstsq(&h, &b);
    println!("rank {} unique {}", sol.rank, sol.unique);
    println!("z* {:?}", sol.z_star.as_slice());
    println!("psi_opt {:.6e}", sol.psi_opt);
    println!("null space {:?}", sol.null_space.as_slice());
}
