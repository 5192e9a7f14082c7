//! Block-partitioned linear system `H z = h` and its ownership structure.
//!
//! Row partitions `k`, column partitions `l` and agents `i` are all numbered
//! from 1; owner 0 stands for an absent (zero) block.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::oracle::{DenseMatrix, DenseVector};

/// How `h_k` is divided among the agents owning blocks of row partition `k`.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitPolicy {
    /// The lowest-numbered agent of the row holds `h_k`, the others hold zero.
    Owner,
    /// Every agent gets `h_k / |S(R_k)|`; the rounding residual goes to the
    /// lowest-numbered agent so that the parts add up to `h_k` exactly.
    Equal,
    /// Caller-supplied parts, one per agent of the row.
    Explicit(BTreeMap<usize, DenseVector>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub owner: usize,
    pub values: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockProblem {
    row_dims: Vec<usize>,
    col_dims: Vec<usize>,
    agents: usize,
    blocks: BTreeMap<(usize, usize), Block>,
    h: Vec<DenseVector>,
    splits: Vec<SplitPolicy>,
}

impl BlockProblem {
    /// Empty problem (all blocks absent, `h = 0`, owner split everywhere).
    pub fn new(row_dims: Vec<usize>, col_dims: Vec<usize>, agents: usize) -> Result<Self> {
        if row_dims.is_empty() || col_dims.is_empty() {
            return Err(Error::Malformed("need at least one row and one column partition".into()));
        }
        if let Some(k) = row_dims.iter().position(|&d| d == 0) {
            return Err(Error::Malformed(format!("row_dims[{}] must be positive", k + 1)));
        }
        if let Some(l) = col_dims.iter().position(|&d| d == 0) {
            return Err(Error::Malformed(format!("col_dims[{}] must be positive", l + 1)));
        }
        if agents == 0 {
            return Err(Error::Malformed("agents must be positive".into()));
        }
        let h = row_dims.iter().map(|&m| DenseVector::zeros(m)).collect();
        let splits = vec![SplitPolicy::Owner; row_dims.len()];
        Ok(Self {
            row_dims,
            col_dims,
            agents,
            blocks: BTreeMap::new(),
            h,
            splits,
        })
    }

    /// Builds a problem by cutting a dense `H` along the given partition grid.
    /// `owner(k, l)` returns `None` for blocks that should be absent.
    pub fn from_dense(
        h_mat: &DenseMatrix,
        h_vec: &DenseVector,
        row_dims: Vec<usize>,
        col_dims: Vec<usize>,
        agents: usize,
        owner: impl Fn(usize, usize) -> Option<usize>,
    ) -> Result<Self> {
        let mut p = Self::new(row_dims, col_dims, agents)?;
        if h_mat.shape() != (p.m(), p.n()) || h_vec.len() != p.m() {
            return Err(Error::Malformed("dense matrix does not match partition grid".into()));
        }
        for k in 1..=p.row_count() {
            for l in 1..=p.col_count() {
                if let Some(i) = owner(k, l) {
                    let block = h_mat
                        .view((p.row_offset(k), p.col_offset(l)), (p.row_dim(k), p.col_dim(l)))
                        .into_owned();
                    p.add_block(k, l, i, block)?;
                }
            }
            let part = h_vec.rows(p.row_offset(k), p.row_dim(k)).into_owned();
            p.set_h(k, part, SplitPolicy::Owner)?;
        }
        Ok(p)
    }

    pub fn add_block(&mut self, k: usize, l: usize, owner: usize, values: DenseMatrix) -> Result<()> {
        self.check_partition(k, l)?;
        if owner == 0 || owner > self.agents {
            return Err(Error::Ownership {
                row: k,
                col: l,
                owner,
                agents: self.agents,
            });
        }
        let want = (self.row_dim(k), self.col_dim(l));
        if values.shape() != want {
            return Err(Error::Structure {
                row: k,
                col: l,
                msg: format!("shape {:?}, expected {:?}", values.shape(), want),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Structure {
                row: k,
                col: l,
                msg: "non-finite entry".into(),
            });
        }
        if self.blocks.insert((k, l), Block { owner, values }).is_some() {
            return Err(Error::Structure {
                row: k,
                col: l,
                msg: "block given twice".into(),
            });
        }
        Ok(())
    }

    pub fn set_h(&mut self, k: usize, values: DenseVector, split: SplitPolicy) -> Result<()> {
        if k == 0 || k > self.row_count() {
            return Err(Error::Malformed(format!("h row partition {k} out of range")));
        }
        if values.len() != self.row_dim(k) {
            return Err(Error::Split {
                row: k,
                msg: format!("h has length {}, expected {}", values.len(), self.row_dim(k)),
            });
        }
        if let SplitPolicy::Explicit(parts) = &split {
            if let Some((i, _)) = parts.iter().find(|(_, v)| v.len() != self.row_dim(k)) {
                return Err(Error::Split {
                    row: k,
                    msg: format!("part of agent {i} has the wrong length"),
                });
            }
        }
        self.h[k - 1] = values;
        self.splits[k - 1] = split;
        Ok(())
    }

    fn check_partition(&self, k: usize, l: usize) -> Result<()> {
        if k == 0 || k > self.row_count() || l == 0 || l > self.col_count() {
            return Err(Error::Structure {
                row: k,
                col: l,
                msg: "partition index out of range".into(),
            });
        }
        Ok(())
    }

    pub fn row_count(&self) -> usize {
        self.row_dims.len()
    }

    pub fn col_count(&self) -> usize {
        self.col_dims.len()
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn row_dims(&self) -> &[usize] {
        &self.row_dims
    }

    pub fn col_dims(&self) -> &[usize] {
        &self.col_dims
    }

    pub fn row_dim(&self, k: usize) -> usize {
        self.row_dims[k - 1]
    }

    pub fn col_dim(&self, l: usize) -> usize {
        self.col_dims[l - 1]
    }

    pub fn m(&self) -> usize {
        self.row_dims.iter().sum()
    }

    pub fn n(&self) -> usize {
        self.col_dims.iter().sum()
    }

    pub fn row_offset(&self, k: usize) -> usize {
        self.row_dims[..k - 1].iter().sum()
    }

    pub fn col_offset(&self, l: usize) -> usize {
        self.col_dims[..l - 1].iter().sum()
    }

    pub fn block(&self, k: usize, l: usize) -> Option<&Block> {
        self.blocks.get(&(k, l))
    }

    pub fn blocks(&self) -> impl Iterator<Item = ((usize, usize), &Block)> {
        self.blocks.iter().map(|(&kl, b)| (kl, b))
    }

    /// `A[H_kl]`: owning agent, 0 for an absent block.
    pub fn owner(&self, k: usize, l: usize) -> usize {
        self.blocks.get(&(k, l)).map_or(0, |b| b.owner)
    }

    pub fn h(&self, k: usize) -> &DenseVector {
        &self.h[k - 1]
    }

    pub fn split(&self, k: usize) -> &SplitPolicy {
        &self.splits[k - 1]
    }

    /// Re-checks every block against the partition grid and owner range.
    pub fn check_structure(&self) -> Result<()> {
        for (&(k, l), b) in &self.blocks {
            self.check_partition(k, l)?;
            if b.values.shape() != (self.row_dim(k), self.col_dim(l)) {
                return Err(Error::Structure {
                    row: k,
                    col: l,
                    msg: "shape mismatch".into(),
                });
            }
            if b.owner == 0 || b.owner > self.agents {
                return Err(Error::Ownership {
                    row: k,
                    col: l,
                    owner: b.owner,
                    agents: self.agents,
                });
            }
        }
        Ok(())
    }

    /// Dense `H` and `h`; block `(k,l)` sits at the partition offsets.
    pub fn assemble_dense(&self) -> (DenseMatrix, DenseVector) {
        let mut h_mat = DenseMatrix::zeros(self.m(), self.n());
        for (&(k, l), b) in &self.blocks {
            h_mat
                .view_mut((self.row_offset(k), self.col_offset(l)), b.values.shape())
                .copy_from(&b.values);
        }
        let mut h_vec = DenseVector::zeros(self.m());
        for k in 1..=self.row_count() {
            h_vec.rows_mut(self.row_offset(k), self.row_dim(k)).copy_from(self.h(k));
        }
        (h_mat, h_vec)
    }
}

/// Ownership lists and sets derived from a [`BlockProblem`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionIndex {
    /// `R_k` for k = 1..K (stored at `k - 1`), one entry per column partition.
    pub row_lists: Vec<Vec<usize>>,
    /// `C^l` for l = 1..L, one entry per row partition.
    pub col_lists: Vec<Vec<usize>>,
    pub row_sets: Vec<BTreeSet<usize>>,
    pub col_sets: Vec<BTreeSet<usize>>,
    /// `(k, i)` → columns `l` with `A[H_kl] = i`, ascending. Only non-empty
    /// entries are stored.
    pub row_blocks: BTreeMap<(usize, usize), Vec<usize>>,
    /// Coupled row partitions: `|S(R_k)| ≥ 2`, ascending.
    pub coupled: Vec<usize>,
    /// Coupled row partitions each agent takes part in (agent `i` at `i - 1`).
    pub agent_coupled: Vec<Vec<usize>>,
}

impl PartitionIndex {
    pub fn r(&self, k: usize) -> &[usize] {
        &self.row_lists[k - 1]
    }

    pub fn c(&self, l: usize) -> &[usize] {
        &self.col_lists[l - 1]
    }

    pub fn sr(&self, k: usize) -> &BTreeSet<usize> {
        &self.row_sets[k - 1]
    }

    pub fn sc(&self, l: usize) -> &BTreeSet<usize> {
        &self.col_sets[l - 1]
    }

    /// Columns of the blocks of row `k` owned by agent `i` (`B_k^(i)`).
    pub fn blocks_of(&self, k: usize, i: usize) -> &[usize] {
        self.row_blocks.get(&(k, i)).map_or(&[], Vec::as_slice)
    }

    pub fn agent_coupled(&self, i: usize) -> &[usize] {
        &self.agent_coupled[i - 1]
    }

    /// The single agent of row `k`, if there is exactly one.
    pub fn sole_owner(&self, k: usize) -> Option<usize> {
        let s = self.sr(k);
        (s.len() == 1).then(|| *s.iter().next().unwrap())
    }

    pub fn is_coupled(&self, k: usize) -> bool {
        self.sr(k).len() >= 2
    }
}

/// Computes `R_k`, `C^l`, `S(·)`, `B_k^(i)`, the coupled set and its per-agent
/// subsets.
pub fn build_index(p: &BlockProblem) -> Result<PartitionIndex> {
    p.check_structure()?;
    let (kk, ll) = (p.row_count(), p.col_count());
    let row_lists: Vec<Vec<usize>> = (1..=kk)
        .map(|k| (1..=ll).map(|l| p.owner(k, l)).collect())
        .collect();
    let col_lists: Vec<Vec<usize>> = (1..=ll)
        .map(|l| (1..=kk).map(|k| p.owner(k, l)).collect())
        .collect();
    let dedup = |list: &Vec<usize>| list.iter().copied().filter(|&a| a != 0).collect::<BTreeSet<_>>();
    let row_sets: Vec<BTreeSet<usize>> = row_lists.iter().map(dedup).collect();
    let col_sets: Vec<BTreeSet<usize>> = col_lists.iter().map(dedup).collect();

    let mut row_blocks: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (&(k, l), b) in &p.blocks {
        row_blocks.entry((k, b.owner)).or_default().push(l);
    }
    let coupled: Vec<usize> = (1..=kk).filter(|&k| row_sets[k - 1].len() >= 2).collect();
    let agent_coupled = (1..=p.agents())
        .map(|i| {
            coupled
                .iter()
                .copied()
                .filter(|&e| row_sets[e - 1].contains(&i))
                .collect()
        })
        .collect();
    Ok(PartitionIndex {
        row_lists,
        col_lists,
        row_sets,
        col_sets,
        row_blocks,
        coupled,
        agent_coupled,
    })
}

/// Local pieces `h_{i,k}` of the right-hand side, keyed by `(i, k)`.
pub type HSplit = BTreeMap<(usize, usize), DenseVector>;

/// Divides every `h_k` among the agents of `S(R_k)` according to the row's
/// split policy. Rows without any block get no entry.
pub fn split_h(p: &BlockProblem, idx: &PartitionIndex) -> Result<HSplit> {
    let mut out = BTreeMap::new();
    for k in 1..=p.row_count() {
        let agents: Vec<usize> = idx.sr(k).iter().copied().collect();
        let Some(&lead) = agents.first() else {
            continue;
        };
        let h = p.h(k);
        if agents.len() == 1 {
            if let SplitPolicy::Explicit(parts) = p.split(k) {
                check_explicit(k, h, &agents, parts)?;
            }
            out.insert((lead, k), h.clone());
            continue;
        }
        match p.split(k) {
            SplitPolicy::Owner => {
                for &i in &agents {
                    let v = if i == lead { h.clone() } else { DenseVector::zeros(h.len()) };
                    out.insert((i, k), v);
                }
            }
            SplitPolicy::Equal => {
                let n = agents.len();
                let mut lead_part = DenseVector::zeros(h.len());
                let mut share = DenseVector::zeros(h.len());
                for (r, &x) in h.iter().enumerate() {
                    let (a, s) = exact_equal_split(x, n);
                    lead_part[r] = a;
                    share[r] = s;
                }
                for &i in &agents {
                    let v = if i == lead { lead_part.clone() } else { share.clone() };
                    out.insert((i, k), v);
                }
            }
            SplitPolicy::Explicit(parts) => {
                check_explicit(k, h, &agents, parts)?;
                for &i in &agents {
                    out.insert((i, k), parts[&i].clone());
                }
            }
        }
    }
    Ok(out)
}

fn check_explicit(
    k: usize,
    h: &DenseVector,
    agents: &[usize],
    parts: &BTreeMap<usize, DenseVector>,
) -> Result<()> {
    if let Some(&i) = parts.keys().find(|i| !agents.contains(i)) {
        return Err(Error::Membership { row: k, agent: i });
    }
    if let Some(&i) = agents.iter().find(|i| !parts.contains_key(i)) {
        return Err(Error::Split {
            row: k,
            msg: format!("no part given for agent {i}"),
        });
    }
    for r in 0..h.len() {
        let sum: f64 = agents.iter().map(|i| parts[i][r]).sum();
        let mag: f64 = agents.iter().map(|i| parts[i][r].abs()).sum::<f64>() + h[r].abs();
        let slack = 4.0 * agents.len() as f64 * f64::EPSILON * mag;
        if (sum - h[r]).abs() > slack {
            return Err(Error::Split {
                row: k,
                msg: format!("parts sum to {sum} at entry {}, expected {}", r + 1, h[r]),
            });
        }
    }
    Ok(())
}

/// Splits `x` into one leading part and `n - 1` equal shares such that every
/// partial sum is exact in binary floating point.
///
/// The shares are integer multiples of the unit in the last place of `x`, so
/// all sums stay on the same integer grid below 2^53.
fn exact_equal_split(x: f64, n: usize) -> (f64, f64) {
    if x == 0.0 || n <= 1 {
        return (x, 0.0);
    }
    let biased = ((x.to_bits() >> 52) & 0x7ff) as i32;
    // ulp of x, built from its bits to avoid underflow in powi
    let unit = if biased > 52 {
        f64::from_bits(((biased - 52) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (biased.max(1) - 1))
    };
    let units = x / unit;
    let share_units = (units / n as f64).round();
    let share = share_units * unit;
    let lead = (units - (n - 1) as f64 * share_units) * unit;
    (lead, share)
}

/// Connectivity of one induced subgraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgraphCheck {
    pub partition: usize,
    pub nodes: Vec<usize>,
    pub connected: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Per column partition `l`: connectivity of `G^l`.
    pub columns: Vec<SubgraphCheck>,
    /// Per row partition `k`: connectivity of `G_k`.
    pub rows: Vec<SubgraphCheck>,
    pub graph_connected: bool,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.errors.is_empty()
    }

    /// Errors joined into one line.
    pub fn summary(&self) -> String {
        self.errors.join("; ")
    }
}

/// Checks well-posedness of a problem on a communication graph. Never fails;
/// every finding ends up in the report.
pub fn validate(p: &BlockProblem, g: &Graph) -> ValidationReport {
    let mut rep = ValidationReport::default();
    if g.node_count() != p.agents() {
        rep.errors.push(format!(
            "graph has {} nodes but the problem has {} agents",
            g.node_count(),
            p.agents()
        ));
        return rep;
    }
    let idx = match build_index(p) {
        Ok(idx) => idx,
        Err(e) => {
            rep.errors.push(e.to_string());
            return rep;
        }
    };
    rep.graph_connected = g.is_connected(g.nodes()).unwrap_or(false);
    if !rep.graph_connected {
        rep.errors.push("communication graph is disconnected".into());
    }
    for l in 1..=p.col_count() {
        let nodes = idx.sc(l);
        if nodes.is_empty() {
            rep.warnings
                .push(format!("column partition {l} has no blocks; its unknowns are unconstrained"));
            continue;
        }
        let connected = g.is_connected(nodes).unwrap_or(false);
        if !connected {
            rep.errors.push(format!(
                "induced subgraph G^{l} on agents {nodes:?} is disconnected"
            ));
        }
        rep.columns.push(SubgraphCheck {
            partition: l,
            nodes: nodes.iter().copied().collect(),
            connected,
        });
    }
    for k in 1..=p.row_count() {
        let nodes = idx.sr(k);
        if nodes.is_empty() {
            rep.errors.push(format!("row partition {k} has no blocks"));
            continue;
        }
        let connected = g.is_connected(nodes).unwrap_or(false);
        if !connected {
            rep.errors.push(format!(
                "induced subgraph G_{k} on agents {nodes:?} is disconnected"
            ));
        }
        rep.rows.push(SubgraphCheck {
            partition: k,
            nodes: nodes.iter().copied().collect(),
            connected,
        });
    }
    for i in 1..=p.agents() {
        if !idx.col_sets.iter().any(|s| s.contains(&i)) {
            rep.errors.push(format!("agent {i} owns no block"));
        }
    }
    for k in 1..=p.row_count() {
        for k2 in k + 1..=p.row_count() {
            if idx.r(k) == idx.r(k2) {
                rep.warnings.push(format!(
                    "row partitions {k} and {k2} have the same agent list; kept separate"
                ));
            }
        }
    }
    if let Err(e) = split_h(p, &idx) {
        rep.errors.push(e.to_string());
    }
    rep
}
