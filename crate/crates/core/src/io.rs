//! JSON problem files.
//!
//! ```json
//! {
//!   "row_dims": [1, 1], "col_dims": [2], "agents": 2,
//!   "blocks": [{"row": 1, "col": 1, "owner": 1, "values": [[1.0, 2.0]]}],
//!   "h": [{"row": 1, "values": [3.0], "split": {"mode": "owner"}},
//!         {"row": 2, "values": [1.0],
//!          "split": {"mode": "explicit", "parts": [{"agent": 2, "values": [1.0]}]}}],
//!   "graph": {"edges": [[1, 2]]}
//! }
//! ```
//!
//! Split modes: `owner`, `equal`, `explicit`. Unknown fields are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::oracle::{DenseMatrix, DenseVector};
use crate::problem::{BlockProblem, SplitPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub row_dims: Vec<usize>,
    pub col_dims: Vec<usize>,
    pub agents: usize,
    pub blocks: Vec<BlockEntry>,
    pub h: Vec<HEntry>,
    pub graph: GraphEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEntry {
    pub row: usize,
    pub col: usize,
    pub owner: usize,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HEntry {
    pub row: usize,
    pub values: Vec<f64>,
    pub split: SplitEntry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Owner,
    Equal,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitEntry {
    pub mode: SplitMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parts: Option<Vec<PartEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartEntry {
    pub agent: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEntry {
    pub edges: Vec<(usize, usize)>,
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DenseMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::Malformed(format!(
            "{field}: row {bad} has {} entries, expected {c}",
            rows[bad].len()
        )));
    }
    Ok(DenseMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<(BlockProblem, Graph)> {
        let mut p = BlockProblem::new(self.row_dims, self.col_dims, self.agents)?;
        for (n, b) in self.blocks.iter().enumerate() {
            let field = format!("blocks[{n}].values");
            let values = matrix(&field, &b.values)?;
            p.add_block(b.row, b.col, b.owner, values)
                .map_err(|e| Error::Malformed(format!("blocks[{n}]: {e}")))?;
        }
        let mut seen = vec![false; p.row_count()];
        for (n, h) in self.h.into_iter().enumerate() {
            if h.row == 0 || h.row > p.row_count() {
                return Err(Error::Malformed(format!("h[{n}].row: {} out of range", h.row)));
            }
            if std::mem::replace(&mut seen[h.row - 1], true) {
                return Err(Error::Malformed(format!("h[{n}].row: row partition {} given twice", h.row)));
            }
            let split = match (h.split.mode, h.split.parts) {
                (SplitMode::Owner, None) => SplitPolicy::Owner,
                (SplitMode::Equal, None) => SplitPolicy::Equal,
                (SplitMode::Explicit, Some(parts)) => {
                    let mut map = BTreeMap::new();
                    for (q, part) in parts.into_iter().enumerate() {
                        if map.insert(part.agent, DenseVector::from_vec(part.values)).is_some() {
                            return Err(Error::Malformed(format!(
                                "h[{n}].split.parts[{q}].agent: agent {} given twice",
                                part.agent
                            )));
                        }
                    }
                    SplitPolicy::Explicit(map)
                }
                (SplitMode::Explicit, None) => {
                    return Err(Error::Malformed(format!("h[{n}].split.parts: required for explicit mode")))
                }
                (_, Some(_)) => {
                    return Err(Error::Malformed(format!(
                        "h[{n}].split.parts: only allowed for explicit mode"
                    )))
                }
            };
            p.set_h(h.row, DenseVector::from_vec(h.values), split)
                .map_err(|e| Error::Malformed(format!("h[{n}]: {e}")))?;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::Malformed(format!("h: row partition {} missing", k + 1)));
        }
        let graph = Graph::new(p.agents(), &self.graph.edges).map_err(|e| Error::Malformed(format!("graph.edges: {e}")))?;
        Ok((p, graph))
    }

    pub fn from_problem(p: &BlockProblem, g: &Graph) -> Self {
        let blocks = p
            .blocks()
            .map(|((k, l), b)| BlockEntry {
                row: k,
                col: l,
                owner: b.owner,
                values: b
                    .values
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect(),
            })
            .collect();
        let h = (1..=p.row_count())
            .map(|k| {
                let split = match p.split(k) {
                    SplitPolicy::Owner => SplitEntry {
                        mode: SplitMode::Owner,
                        parts: None,
                    },
                    SplitPolicy::Equal => SplitEntry {
                        mode: SplitMode::Equal,
                        parts: None,
                    },
                    SplitPolicy::Explicit(parts) => SplitEntry {
                        mode: SplitMode::Explicit,
                        parts: Some(
                            parts
                                .iter()
                                .map(|(&agent, v)| PartEntry {
                                    agent,
                                    values: v.iter().copied().collect(),
                                })
                                .collect(),
                        ),
                    },
                };
                HEntry {
                    row: k,
                    values: p.h(k).iter().copied().collect(),
                    split,
                }
            })
            .collect();
        Self {
            row_dims: p.row_dims().to_vec(),
            col_dims: p.col_dims().to_vec(),
            agents: p.agents(),
            blocks,
            h,
            graph: GraphEntry { edges: g.edges() },
        }
    }
}

pub fn parse_problem(text: &str) -> Result<(BlockProblem, Graph)> {
    let file: ProblemFile = serde_json::from_str(text)?;
    file.into_problem()
}

pub fn problem_to_string(p: &BlockProblem, g: &Graph) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ProblemFile::from_problem(p, g))?)
}

pub fn load_problem(path: &Path) -> Result<(BlockProblem, Graph)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })?;
    parse_problem(&text)
}

pub fn save_problem(path: &Path, p: &BlockProblem, g: &Graph) -> Result<()> {
    std::fs::write(path, problem_to_string(p, g)?)?;
    Ok(())
}
