//! Dense kernels and the centralized least-squares oracle.
//!
//! [`SpdFactor`] is the Cholesky factorization used by every agent for its
//! round-invariant local system. [`min_norm_lstsq`] is the ground truth the
//! distributed iteration is checked against; it goes through a singular value
//! decomposition and shares no code with the agent path.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::problem::BlockProblem;

pub type DenseMatrix = DMatrix<f64>;
pub type DenseVector = DVector<f64>;

/// Relative pivot threshold used when a caller does not pick one.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor `A = L Lᵀ` of a symmetric positive
/// definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: DenseMatrix,
}

impl SpdFactor {
    /// Factorizes the lower triangle of `a`. A pivot at or below
    /// `rel_tol * max|diag(a)|` is reported as [`Error::NotPositiveDefinite`].
    pub fn new(a: &DenseMatrix, rel_tol: f64) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "SpdFactor needs a square matrix");
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        let threshold = rel_tol * scale;
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d.is_nan() || d <= threshold {
                return Err(Error::NotPositiveDefinite { index: j, pivot: d });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor(&self) -> &DenseMatrix {
        &self.l
    }

    /// Solves `A x = b` with one forward and one backward substitution.
    pub fn solve(&self, b: &DenseVector) -> DenseVector {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let l = &self.l;
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }
}

/// Solves a symmetric positive definite system.
pub fn spd_solve(a: &DenseMatrix, b: &DenseVector) -> Result<DenseVector> {
    Ok(SpdFactor::new(a, DEFAULT_PIVOT_TOL)?.solve(b))
}

/// Minimum-norm least-squares solution of `H z ≈ h`.
#[derive(Debug, Clone)]
pub struct LsqSolution {
    pub z_star: DenseVector,
    /// `½‖H z* − h‖²`
    pub psi_opt: f64,
    pub rank: usize,
    /// `rank == n`, i.e. the least-squares solution is unique.
    pub unique: bool,
    /// Orthonormal basis of the numerical null space of `H` (n × (n − rank)).
    pub null_space: DenseMatrix,
}

/// Minimum-norm minimizer of `½‖H z − h‖²` through a singular value
/// decomposition. Singular values at or below `1e-10·σ_max·max(m, n)` are
/// treated as zero.
pub fn min_norm_lstsq(h_mat: &DenseMatrix, h_vec: &DenseVector) -> LsqSolution {
    let (m, n) = h_mat.shape();
    assert_eq!(h_vec.len(), m, "rhs length must match row count");
    if n == 0 {
        return LsqSolution {
            z_star: DenseVector::zeros(0),
            psi_opt: 0.5 * h_vec.norm_squared(),
            rank: 0,
            unique: true,
            null_space: DenseMatrix::zeros(0, 0),
        };
    }
    // Pad short matrices with zero rows so that V is square and the null space
    // is complete.
    let rows = m.max(n);
    let mut padded = DenseMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m, n)).copy_from(h_mat);
    let mut rhs = DenseVector::zeros(rows);
    rhs.rows_mut(0, m).copy_from(h_vec);

    let svd = SVD::new(padded, true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let tol = 1e-10 * sigma_max * rows as f64;

    let mut z = DenseVector::zeros(n);
    let mut null_cols = Vec::new();
    let mut rank = 0;
    for (idx, &s) in sigma.iter().enumerate() {
        let v = v_t.row(idx).transpose();
        if s > tol {
            rank += 1;
            let coef = u.column(idx).dot(&rhs) / s;
            z.axpy(coef, &v, 1.0);
        } else {
            null_cols.push(v);
        }
    }
    let null_space = if null_cols.is_empty() {
        DenseMatrix::zeros(n, 0)
    } else {
        DenseMatrix::from_columns(&null_cols)
    };
    let psi_opt = 0.5 * (h_mat * &z - h_vec).norm_squared();
    LsqSolution {
        z_star: z,
        psi_opt,
        rank,
        unique: rank == n,
        null_space,
    }
}

/// Oracle solution of the assembled problem.
pub fn solve_problem(problem: &BlockProblem) -> LsqSolution {
    let (h_mat, h_vec) = problem.assemble_dense();
    min_norm_lstsq(&h_mat, &h_vec)
}

/// Optimal value `½‖H z* − h‖²` of the assembled problem.
pub fn psi_opt_of(problem: &BlockProblem) -> f64 {
    solve_problem(problem).psi_opt
}
