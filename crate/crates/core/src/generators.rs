//! Instance generators.
//!
//! Random entries come from a `ChaCha8Rng` seeded with the caller's seed and
//! are drawn uniformly from [-1, 1), in the order documented on each
//! generator. The same seed always yields the same problem.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::oracle::{DenseMatrix, DenseVector};
use crate::problem::{BlockProblem, SplitPolicy};

/// The five-agent communication graph used by the row-decomposition
/// comparison instances and the worked layout example.
pub fn five_agent_graph() -> Graph {
    Graph::new(5, &[(1, 2), (1, 3), (2, 4), (3, 4), (2, 5), (3, 5)]).expect("static edges")
}

fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
    // row-major draw order
    let data: Vec<f64> = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    DenseMatrix::from_row_slice(r, c, &data)
}

fn uniform_vector(rng: &mut ChaCha8Rng, n: usize) -> DenseVector {
    DenseVector::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..1.0)))
}

/// Which of the two 5×4 systems to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fig3System {
    /// Full column rank: a unique least-squares solution.
    Unique,
    /// Rank deficient: infinitely many least-squares solutions.
    RankDeficient,
}

const A1: [[f64; 4]; 5] = [
    [1.0, 2.0, 1.0, 1.0],
    [2.0, -1.0, -1.0, 1.0],
    [1.0, -2.0, 4.0, -1.0],
    [-1.0, -0.6, 0.4, 1.8],
    [2.0, 2.0, -2.0, 1.0],
];
const A2: [[f64; 4]; 5] = [
    [1.0, 2.0, 1.0, 1.0],
    [1.0, 1.4, -1.6, 2.8],
    [3.0, 3.0, -3.6, 3.8],
    [-1.0, -0.6, 0.4, 1.8],
    [2.0, 2.0, -2.0, 1.0],
];
const B: [f64; 5] = [10.0, 20.0, 15.0, 17.0, 11.0];

/// Row-decomposed 5×4 system: agent `i` solely owns row `i` and `b_i`; the
/// single column partition (n = 4) is shared by everyone.
pub fn fig3(which: Fig3System) -> (BlockProblem, Graph) {
    let rows = match which {
        Fig3System::Unique => &A1,
        Fig3System::RankDeficient => &A2,
    };
    let mut p = BlockProblem::new(vec![1; 5], vec![4], 5).expect("static dims");
    for (k, row) in rows.iter().enumerate() {
        p.add_block(k + 1, 1, k + 1, DenseMatrix::from_row_slice(1, 4, row))
            .expect("static block");
        p.set_h(k + 1, DenseVector::from_element(1, B[k]), SplitPolicy::Owner)
            .expect("static h");
    }
    (p, five_agent_graph())
}

/// Partition sizes for [`appendix_a`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppendixADims {
    pub row_dims: [usize; 6],
    pub col_dims: [usize; 4],
}

impl AppendixADims {
    pub fn ones() -> Self {
        Self {
            row_dims: [1; 6],
            col_dims: [1; 4],
        }
    }
}

/// Owner of every present block of the six-by-four worked layout.
pub const APPENDIX_A_OWNERS: [((usize, usize), usize); 13] = [
    ((1, 1), 1),
    ((1, 3), 1),
    ((2, 1), 2),
    ((4, 1), 2),
    ((3, 2), 3),
    ((3, 3), 3),
    ((4, 3), 3),
    ((2, 4), 4),
    ((4, 4), 4),
    ((5, 1), 5),
    ((5, 3), 5),
    ((6, 1), 5),
    ((6, 2), 5),
];

/// The worked six-row-partition, four-column-partition layout over the
/// five-agent graph. Blocks are drawn in the order of [`APPENDIX_A_OWNERS`],
/// then `h_1..h_6`. Coupled rows use the equal split.
pub fn appendix_a(dims: &AppendixADims, seed: u64) -> (BlockProblem, Graph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = BlockProblem::new(dims.row_dims.to_vec(), dims.col_dims.to_vec(), 5)
        .expect("appendix dims must be positive");
    for &((k, l), owner) in &APPENDIX_A_OWNERS {
        let b = uniform_matrix(&mut rng, p.row_dim(k), p.col_dim(l));
        p.add_block(k, l, owner, b).expect("shape follows dims");
    }
    for k in 1..=6 {
        let h = uniform_vector(&mut rng, p.row_dim(k));
        let split = if k == 2 || k == 4 {
            SplitPolicy::Equal
        } else {
            SplitPolicy::Owner
        };
        p.set_h(k, h, split).expect("length follows dims");
    }
    (p, five_agent_graph())
}

/// Parameters of the grid experiment: one agent per grid node, each with
/// `n_local` unknowns of which the first `n_shared` are common to everybody,
/// and one coupled row partition of `m_coupled` equations spanning all agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub n_local: usize,
    pub n_shared: usize,
    pub m_coupled: usize,
    pub seed: u64,
}

impl GridSpec {
    /// 4×6 agents, 20 local unknowns, 5 shared, 5 coupled equations.
    pub fn four_by_six(seed: u64) -> Self {
        Self {
            rows: 4,
            cols: 6,
            n_local: 20,
            n_shared: 5,
            m_coupled: 5,
            seed,
        }
    }

    pub fn agents(&self) -> usize {
        self.rows * self.cols
    }
}

/// Grid instance.
///
/// Layout: column partition 1 holds the `n_shared` common unknowns, column
/// partition `1 + i` holds agent `i`'s `n_local - n_shared` private unknowns.
/// Row partition `i` (n_local rows) is solely owned by agent `i` and carries a
/// random square `A_i` split over columns 1 and `1 + i`. Row partition
/// `N + 1` is coupled: agent `i` owns block `(N+1, 1+i) = [0 I]`, so that
/// `B̄_i = [0 I_m]` over its local vector, and `h_{N+1}` is the sum of the
/// random local parts `b̄_i`.
///
/// Draw order: for each agent, `A_i` (row-major) then `a_i`; afterwards
/// `b̄_1..b̄_N`.
pub fn grid(spec: &GridSpec) -> Result<(BlockProblem, Graph)> {
    let GridSpec {
        rows,
        cols,
        n_local,
        n_shared,
        m_coupled,
        seed,
    } = *spec;
    if rows == 0 || cols == 0 {
        return Err(Error::Parameter("grid needs rows, cols >= 1".into()));
    }
    if n_shared == 0 || m_coupled == 0 || n_local < n_shared + m_coupled {
        return Err(Error::Parameter(format!(
            "need n_shared >= 1, m_coupled >= 1 and n_local >= n_shared + m_coupled \
             (got n_local={n_local}, n_shared={n_shared}, m_coupled={m_coupled})"
        )));
    }
    let n_agents = rows * cols;
    let n_private = n_local - n_shared;
    let mut row_dims = vec![n_local; n_agents];
    row_dims.push(m_coupled);
    let mut col_dims = vec![n_shared];
    col_dims.extend(std::iter::repeat_n(n_private, n_agents));
    let mut p = BlockProblem::new(row_dims, col_dims, n_agents)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 1..=n_agents {
        let a = uniform_matrix(&mut rng, n_local, n_local);
        let a_vec = uniform_vector(&mut rng, n_local);
        p.add_block(i, 1, i, a.columns(0, n_shared).into_owned())?;
        p.add_block(i, 1 + i, i, a.columns(n_shared, n_private).into_owned())?;
        p.set_h(i, a_vec, SplitPolicy::Owner)?;
    }
    let coupled = n_agents + 1;
    let mut selector = DenseMatrix::zeros(m_coupled, n_private);
    selector
        .view_mut((0, n_private - m_coupled), (m_coupled, m_coupled))
        .fill_with_identity();
    let mut parts = BTreeMap::new();
    let mut h = DenseVector::zeros(m_coupled);
    for i in 1..=n_agents {
        p.add_block(coupled, 1 + i, i, selector.clone())?;
        let b = uniform_vector(&mut rng, m_coupled);
        h += &b;
        parts.insert(i, b);
    }
    p.set_h(coupled, h, SplitPolicy::Explicit(parts))?;
    Ok((p, Graph::grid(rows, cols)))
}
