//! Compilation of a validated problem into per-agent local programs.
//!
//! Agent `i` owns the local vector `x_i = col{z̄_i, v̄_i}`:
//!
//! * `z̄_i` stacks its copies `z_l^(i)` of every column partition it touches,
//!   ascending in `l`;
//! * `v̄_i` stacks one virtual-flow slot `v_{ij,ε}^(i)` (length `m_ε`) per
//!   coupled row `ε` it belongs to and per neighbor `j` that also belongs to
//!   `ε`, ascending in `ε` and then `j`.
//!
//! The local cost is
//!
//! ```text
//! Ψ_i(x) = ½‖A_i z̄_i − a_i‖² + Σ_ε (w_ε/2)‖B̄_{i,ε} z̄_i + Σ_j v_{ij,ε}^(i) − b̄_{i,ε}‖²
//! ```
//!
//! with `w_ε = |S(R_ε)|`, and each edge `(i,j)` carries the affine map
//! `m_ij(x_i) = E_ij x_i − e_ij` whose equality across the edge encodes copy
//! consensus, equal residual shares and antisymmetric flows.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::oracle::{DenseMatrix, DenseVector};
use crate::problem::{build_index, split_h, validate, BlockProblem, HSplit, PartitionIndex};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZSlot {
    pub col: usize,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VSlot {
    pub row: usize,
    pub neighbor: usize,
    pub start: usize,
    pub len: usize,
}

/// Position of every block of `x_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentLayout {
    pub agent: usize,
    pub z_slots: Vec<ZSlot>,
    pub v_slots: Vec<VSlot>,
    pub z_dim: usize,
    pub x_dim: usize,
}

impl AgentLayout {
    pub fn owned_cols(&self) -> Vec<usize> {
        self.z_slots.iter().map(|s| s.col).collect()
    }

    /// `(ε, j)` pairs in slot order.
    pub fn v_keys(&self) -> Vec<(usize, usize)> {
        self.v_slots.iter().map(|s| (s.row, s.neighbor)).collect()
    }

    pub fn z_range(&self, col: usize) -> Option<Range<usize>> {
        self.z_slots
            .iter()
            .find(|s| s.col == col)
            .map(|s| s.start..s.start + s.len)
    }

    pub fn v_range(&self, row: usize, neighbor: usize) -> Option<Range<usize>> {
        self.v_slots
            .iter()
            .find(|s| s.row == row && s.neighbor == neighbor)
            .map(|s| s.start..s.start + s.len)
    }
}

/// Builds every agent's layout. Fails for an agent without any variable.
pub fn build_layouts(p: &BlockProblem, idx: &PartitionIndex, g: &Graph) -> Result<Vec<AgentLayout>> {
    (1..=p.agents())
        .map(|i| {
            let mut z_slots = Vec::new();
            let mut off = 0;
            for l in 1..=p.col_count() {
                if idx.sc(l).contains(&i) {
                    z_slots.push(ZSlot {
                        col: l,
                        start: off,
                        len: p.col_dim(l),
                    });
                    off += p.col_dim(l);
                }
            }
            if z_slots.is_empty() {
                return Err(Error::NoVariables { agent: i });
            }
            let z_dim = off;
            let mut v_slots = Vec::new();
            for &eps in idx.agent_coupled(i) {
                for &j in g.neighbors(i)? {
                    if idx.sr(eps).contains(&j) {
                        v_slots.push(VSlot {
                            row: eps,
                            neighbor: j,
                            start: off,
                            len: p.row_dim(eps),
                        });
                        off += p.row_dim(eps);
                    }
                }
            }
            Ok(AgentLayout {
                agent: i,
                z_slots,
                v_slots,
                z_dim,
                x_dim: off,
            })
        })
        .collect()
}

/// Column partitions shared by agents `i` and `j`, ascending.
fn shared_cols(idx: &PartitionIndex, i: usize, j: usize) -> Vec<usize> {
    (1..=idx.col_sets.len())
        .filter(|&l| idx.sc(l).contains(&i) && idx.sc(l).contains(&j))
        .collect()
}

fn shared_coupled(idx: &PartitionIndex, i: usize, j: usize) -> Vec<usize> {
    idx.agent_coupled(i)
        .iter()
        .copied()
        .filter(|e| idx.agent_coupled(j).contains(e))
        .collect()
}

/// Selector `P_ij` (rows over the shared column partitions, columns over
/// `z̄_i`).
pub fn build_p(layout: &AgentLayout, idx: &PartitionIndex, g: &Graph, j: usize) -> Result<DenseMatrix> {
    let i = layout.agent;
    if !g.has_edge(i, j) {
        return Err(Error::NotAnEdge(i, j));
    }
    let cols = shared_cols(idx, i, j);
    let rows: usize = cols.iter().map(|&l| layout.z_range(l).unwrap().len()).sum();
    let mut p = DenseMatrix::zeros(rows, layout.z_dim);
    let mut r = 0;
    for l in cols {
        let range = layout.z_range(l).unwrap();
        let n = range.len();
        p.view_mut((r, range.start), (n, n)).fill_with_identity();
        r += n;
    }
    Ok(p)
}

/// One coupled row partition as seen by one agent.
#[derive(Debug, Clone)]
pub struct CoupledRow {
    pub row: usize,
    /// `|S(R_ε)|`
    pub weight: f64,
    /// `B̄_{i,ε}` over `z̄_i`.
    pub b_mat: DenseMatrix,
    /// `b̄_{i,ε}`
    pub b_vec: DenseVector,
    /// `R_{i,ε}` over `x_i`: `R x = B̄ z̄ + Σ_j v_{ij,ε}`.
    pub share_map: DenseMatrix,
}

/// Local data taken from the rows an agent owns blocks in.
#[derive(Debug, Clone)]
pub struct RowData {
    /// Stacked `Ā_{i,k}` over the row partitions the agent owns alone.
    pub a_mat: DenseMatrix,
    pub a_vec: DenseVector,
    pub sole_rows: Vec<usize>,
    pub coupled: Vec<CoupledRow>,
}

fn place_row_blocks(p: &BlockProblem, idx: &PartitionIndex, layout: &AgentLayout, k: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(p.row_dim(k), layout.z_dim);
    for &l in idx.blocks_of(k, layout.agent) {
        let range = layout.z_range(l).expect("owner holds a copy of the column");
        let b = &p.block(k, l).unwrap().values;
        m.view_mut((0, range.start), b.shape()).copy_from(b);
    }
    m
}

pub fn build_row_data(p: &BlockProblem, idx: &PartitionIndex, split: &HSplit, layout: &AgentLayout) -> RowData {
    let i = layout.agent;
    let sole_rows: Vec<usize> = (1..=p.row_count()).filter(|&k| idx.sole_owner(k) == Some(i)).collect();
    let rows: usize = sole_rows.iter().map(|&k| p.row_dim(k)).sum();
    let mut a_mat = DenseMatrix::zeros(rows, layout.z_dim);
    let mut a_vec = DenseVector::zeros(rows);
    let mut r = 0;
    for &k in &sole_rows {
        let m = p.row_dim(k);
        a_mat.rows_mut(r, m).copy_from(&place_row_blocks(p, idx, layout, k));
        a_vec.rows_mut(r, m).copy_from(p.h(k));
        r += m;
    }
    let coupled = idx
        .agent_coupled(i)
        .iter()
        .map(|&eps| {
            let b_mat = place_row_blocks(p, idx, layout, eps);
            let m = p.row_dim(eps);
            let mut share_map = DenseMatrix::zeros(m, layout.x_dim);
            share_map.columns_mut(0, layout.z_dim).copy_from(&b_mat);
            for s in layout.v_slots.iter().filter(|s| s.row == eps) {
                share_map.view_mut((0, s.start), (m, m)).fill_with_identity();
            }
            CoupledRow {
                row: eps,
                weight: idx.sr(eps).len() as f64,
                b_mat,
                b_vec: split[&(i, eps)].clone(),
                share_map,
            }
        })
        .collect();
    RowData {
        a_mat,
        a_vec,
        sole_rows,
        coupled,
    }
}

/// Quadratic form `(Q_i, q_i, const_i)` with
/// `Ψ_i(x) = ½ xᵀ Q_i x + q_iᵀ x + const_i`.
pub fn build_quadratic(layout: &AgentLayout, rows: &RowData) -> (DenseMatrix, DenseVector, f64) {
    let n = layout.x_dim;
    let zd = layout.z_dim;
    let mut q_mat = DenseMatrix::zeros(n, n);
    let mut q_vec = DenseVector::zeros(n);
    q_mat
        .view_mut((0, 0), (zd, zd))
        .copy_from(&(rows.a_mat.transpose() * &rows.a_mat));
    q_vec.rows_mut(0, zd).copy_from(&(-(rows.a_mat.transpose() * &rows.a_vec)));
    let mut cost = 0.5 * rows.a_vec.norm_squared();
    for c in &rows.coupled {
        let rt = c.share_map.transpose();
        q_mat += (&rt * &c.share_map) * c.weight;
        q_vec -= (&rt * &c.b_vec) * c.weight;
        cost += 0.5 * c.weight * c.b_vec.norm_squared();
    }
    // exact symmetry regardless of summation order
    let sym = (&q_mat + q_mat.transpose()) * 0.5;
    (sym, q_vec, cost)
}

/// Affine edge map `m_ij(x_i) = E_ij x_i − e_ij`.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub neighbor: usize,
    pub shared_cols: Vec<usize>,
    pub shared_rows: Vec<usize>,
    /// Number of leading rows that belong to the `P_ij` block.
    pub p_rows: usize,
    /// `+1` if this agent has the smaller id, else `−1`.
    pub sign: f64,
    pub e_mat: DenseMatrix,
    pub e_off: DenseVector,
}

impl Coupling {
    pub fn rows(&self) -> usize {
        self.e_mat.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows() == 0
    }

    pub fn apply(&self, x: &DenseVector) -> DenseVector {
        &self.e_mat * x - &self.e_off
    }
}

pub fn build_coupling(
    layout: &AgentLayout,
    rows: &RowData,
    idx: &PartitionIndex,
    g: &Graph,
    j: usize,
) -> Result<Coupling> {
    let i = layout.agent;
    let p_block = build_p(layout, idx, g, j)?;
    let shared_cols = shared_cols(idx, i, j);
    let shared_rows = shared_coupled(idx, i, j);
    let sign = if i < j { 1.0 } else { -1.0 };
    let p_rows = p_block.nrows();
    let total = p_rows
        + shared_rows
            .iter()
            .map(|&e| 2 * rows.coupled.iter().find(|c| c.row == e).unwrap().b_vec.len())
            .sum::<usize>();
    let mut e_mat = DenseMatrix::zeros(total, layout.x_dim);
    let mut e_off = DenseVector::zeros(total);
    e_mat.view_mut((0, 0), (p_rows, layout.z_dim)).copy_from(&p_block);
    let mut r = p_rows;
    for &eps in &shared_rows {
        let c = rows.coupled.iter().find(|c| c.row == eps).unwrap();
        let m = c.b_vec.len();
        e_mat.rows_mut(r, m).copy_from(&c.share_map);
        e_off.rows_mut(r, m).copy_from(&c.b_vec);
        r += m;
        let v = layout.v_range(eps, j).expect("edge inside G_eps has a flow slot");
        e_mat
            .view_mut((r, v.start), (m, m))
            .copy_from(&(DenseMatrix::identity(m, m) * sign));
        r += m;
    }
    Ok(Coupling {
        neighbor: j,
        shared_cols,
        shared_rows,
        p_rows,
        sign,
        e_mat,
        e_off,
    })
}

/// Everything agent `i` knows after compilation.
#[derive(Debug, Clone)]
pub struct AgentProgram {
    pub layout: AgentLayout,
    pub rows: RowData,
    pub q_mat: DenseMatrix,
    pub q_vec: DenseVector,
    pub cost_const: f64,
    /// One entry per neighbor, ascending; empty couplings included.
    pub couplings: Vec<Coupling>,
}

impl AgentProgram {
    pub fn agent(&self) -> usize {
        self.layout.agent
    }

    /// `Ψ_i(x)` from the quadratic form.
    pub fn cost(&self, x: &DenseVector) -> f64 {
        0.5 * x.dot(&(&self.q_mat * x)) + self.q_vec.dot(x) + self.cost_const
    }

    /// `Ψ_i(x)` evaluated directly from the residuals.
    pub fn cost_from_residuals(&self, x: &DenseVector) -> f64 {
        let z = self.z_part(x);
        let mut total = 0.5 * (&self.rows.a_mat * &z - &self.rows.a_vec).norm_squared();
        for c in &self.rows.coupled {
            total += 0.5 * c.weight * self.share(c, x).norm_squared();
        }
        total
    }

    /// `B̄_{i,ε} z̄_i + Σ_j v_{ij,ε}^(i) − b̄_{i,ε}`
    pub fn share(&self, c: &CoupledRow, x: &DenseVector) -> DenseVector {
        &c.share_map * x - &c.b_vec
    }

    pub fn z_part(&self, x: &DenseVector) -> DenseVector {
        x.rows(0, self.layout.z_dim).into_owned()
    }

    pub fn coupling(&self, j: usize) -> Option<&Coupling> {
        self.couplings.iter().find(|c| c.neighbor == j)
    }
}

/// Compiled distributed problem.
#[derive(Debug, Clone)]
pub struct CompiledProblem {
    pub problem: BlockProblem,
    pub graph: Graph,
    pub index: PartitionIndex,
    pub split: HSplit,
    /// Agent `i` at `i - 1`.
    pub programs: Vec<AgentProgram>,
}

/// Validates, indexes and compiles a problem on its communication graph.
pub fn compile(problem: &BlockProblem, graph: &Graph) -> Result<CompiledProblem> {
    let report = validate(problem, graph);
    if !report.passed() {
        return Err(Error::Validation(report.summary()));
    }
    let index = build_index(problem)?;
    let split = split_h(problem, &index)?;
    let layouts = build_layouts(problem, &index, graph)?;
    let programs = layouts
        .into_iter()
        .map(|layout| {
            let rows = build_row_data(problem, &index, &split, &layout);
            let (q_mat, q_vec, cost_const) = build_quadratic(&layout, &rows);
            let couplings = graph
                .neighbors(layout.agent)?
                .iter()
                .map(|&j| build_coupling(&layout, &rows, &index, graph, j))
                .collect::<Result<Vec<_>>>()?;
            Ok(AgentProgram {
                layout,
                rows,
                q_mat,
                q_vec,
                cost_const,
                couplings,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompiledProblem {
        problem: problem.clone(),
        graph: graph.clone(),
        index,
        split,
        programs,
    })
}

impl CompiledProblem {
    pub fn agents(&self) -> usize {
        self.programs.len()
    }

    pub fn program(&self, i: usize) -> &AgentProgram {
        &self.programs[i - 1]
    }

    /// Edges `(i, j)`, `i < j`, whose coupling carries at least one row.
    pub fn active_edges(&self) -> Vec<(usize, usize)> {
        self.graph
            .edges()
            .into_iter()
            .filter(|&(i, j)| !self.program(i).coupling(j).unwrap().is_empty())
            .collect()
    }

    /// Each agent's `z̄_i` cut from a global `z`.
    pub fn z_copies(&self, z: &DenseVector) -> Vec<DenseVector> {
        self.programs
            .iter()
            .map(|prog| {
                let mut out = DenseVector::zeros(prog.layout.z_dim);
                for s in &prog.layout.z_slots {
                    let off = self.problem.col_offset(s.col);
                    out.rows_mut(s.start, s.len).copy_from(&z.rows(off, s.len));
                }
                out
            })
            .collect()
    }

    /// Balanced virtual flows of coupled row `eps` for the given copies.
    /// Keys are `(i, j)`, values `v_{ij,ε}^(i)`.
    pub fn balanced_flows(&self, eps: usize, z_copies: &[DenseVector]) -> Result<BTreeMap<(usize, usize), DenseVector>> {
        let members = self.index.sr(eps);
        let residuals = members
            .iter()
            .map(|&i| {
                let prog = self.program(i);
                let c = prog.rows.coupled.iter().find(|c| c.row == eps).unwrap();
                (i, &c.b_mat * &z_copies[i - 1] - &c.b_vec)
            })
            .collect();
        balance_virtual_flows(&self.graph, members, &residuals)
    }

    /// Feasible local vectors for a global `z`: consistent copies plus
    /// balanced flows in every coupled row.
    pub fn feasible_point(&self, z: &DenseVector) -> Result<Vec<DenseVector>> {
        let copies = self.z_copies(z);
        let mut xs: Vec<DenseVector> = self
            .programs
            .iter()
            .zip(&copies)
            .map(|(prog, zc)| {
                let mut x = DenseVector::zeros(prog.layout.x_dim);
                x.rows_mut(0, zc.len()).copy_from(zc);
                x
            })
            .collect();
        for &eps in &self.index.coupled {
            for ((i, j), v) in self.balanced_flows(eps, &copies)? {
                let range = self.program(i).layout.v_range(eps, j).unwrap();
                xs[i - 1].rows_mut(range.start, range.len()).copy_from(&v);
            }
        }
        Ok(xs)
    }

    /// `Σ_i Ψ_i(x_i)`
    pub fn total_cost(&self, xs: &[DenseVector]) -> f64 {
        self.programs.iter().zip(xs).map(|(p, x)| p.cost(x)).sum()
    }
}

/// Routes per-agent deficits along a breadth-first spanning tree of the
/// members' induced subgraph so that every member ends up with the same
/// share `u / |members|`, where `u` is the sum of `local_residuals`.
///
/// Returns `v_{ij}^(i)` for every ordered pair of adjacent members; flows are
/// antisymmetric and non-tree edges carry zero.
pub fn balance_virtual_flows(
    g: &Graph,
    members: &BTreeSet<usize>,
    local_residuals: &BTreeMap<usize, DenseVector>,
) -> Result<BTreeMap<(usize, usize), DenseVector>> {
    let tree = g.spanning_tree(members)?;
    let dim = local_residuals.values().next().map_or(0, DenseVector::len);
    let total = local_residuals
        .values()
        .fold(DenseVector::zeros(dim), |acc, r| acc + r);
    let target = total / members.len() as f64;

    let mut flows = BTreeMap::new();
    for &i in members {
        for &j in g.neighbors(i)? {
            if members.contains(&j) {
                flows.insert((i, j), DenseVector::zeros(dim));
            }
        }
    }
    // sum of flows already fixed on child edges, per node
    let mut routed: BTreeMap<usize, DenseVector> =
        members.iter().map(|&i| (i, DenseVector::zeros(dim))).collect();
    for &c in tree.order.iter().skip(1).rev() {
        let parent = tree.parent[&c];
        let deficit = &target - &local_residuals[&c];
        let up = deficit - &routed[&c];
        *routed.get_mut(&parent).unwrap() -= &up;
        flows.insert((parent, c), -&up);
        flows.insert((c, parent), up);
    }
    Ok(flows)
}
