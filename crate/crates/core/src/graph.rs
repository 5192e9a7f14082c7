//! Undirected communication graph between agents.
//!
//! Agents are numbered from 1. All traversals visit neighbors in ascending id
//! order, so every derived structure (spanning trees, edge lists) is
//! reproducible.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    nodes: BTreeSet<usize>,
    adj: BTreeMap<usize, BTreeSet<usize>>,
}

impl Graph {
    /// Builds the graph on nodes `1..=node_count`. Duplicate edges (in either
    /// orientation) and self-loops are rejected.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let nodes: BTreeSet<usize> = (1..=node_count).collect();
        let mut adj: BTreeMap<usize, BTreeSet<usize>> =
            nodes.iter().map(|&i| (i, BTreeSet::new())).collect();
        for &(i, j) in edges {
            if i == j || !nodes.contains(&i) || !nodes.contains(&j) {
                return Err(Error::InvalidEdge(i, j));
            }
            if !adj.get_mut(&i).unwrap().insert(j) {
                return Err(Error::InvalidEdge(i, j));
            }
            adj.get_mut(&j).unwrap().insert(i);
        }
        Ok(Self {
            node_count,
            nodes,
            adj,
        })
    }

    /// Undirected grid with `rows * cols` nodes numbered row by row.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let id = |r: usize, c: usize| r * cols + c + 1;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((id(r, c), id(r + 1, c)));
                }
            }
        }
        Self::new(rows * cols, &edges).expect("grid edges are valid")
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn nodes(&self) -> &BTreeSet<usize> {
        &self.nodes
    }

    /// Edges as `(i, j)` with `i < j`, sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adj
            .iter()
            .flat_map(|(&i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj.get(&i).is_some_and(|ns| ns.contains(&j))
    }

    fn check(&self, i: usize) -> Result<()> {
        if self.nodes.contains(&i) {
            Ok(())
        } else {
            Err(Error::UnknownNode {
                agent: i,
                nodes: self.node_count,
            })
        }
    }

    /// Ascending neighbor set of agent `i`.
    pub fn neighbors(&self, i: usize) -> Result<&BTreeSet<usize>> {
        self.check(i)?;
        Ok(&self.adj[&i])
    }

    /// Subgraph induced by `nodes`; node ids are kept as they are.
    pub fn induced_subgraph(&self, nodes: &BTreeSet<usize>) -> Result<Graph> {
        for &i in nodes {
            self.check(i)?;
        }
        let adj = nodes
            .iter()
            .map(|&i| {
                let ns = self.adj[&i].intersection(nodes).copied().collect();
                (i, ns)
            })
            .collect();
        Ok(Graph {
            node_count: self.node_count,
            nodes: nodes.clone(),
            adj,
        })
    }

    /// Whether the subgraph induced by `nodes` is connected.
    pub fn is_connected(&self, nodes: &BTreeSet<usize>) -> Result<bool> {
        let first = *nodes.iter().next().ok_or(Error::EmptyNodeSet)?;
        for &i in nodes {
            self.check(i)?;
        }
        let reached = self.bfs(first, nodes);
        Ok(reached.order.len() == nodes.len())
    }

    /// Breadth-first spanning tree of the induced subgraph, rooted at its
    /// smallest node.
    pub fn spanning_tree(&self, nodes: &BTreeSet<usize>) -> Result<SpanningTree> {
        let first = *nodes.iter().next().ok_or(Error::EmptyNodeSet)?;
        for &i in nodes {
            self.check(i)?;
        }
        let tree = self.bfs(first, nodes);
        if tree.order.len() != nodes.len() {
            return Err(Error::Disconnected {
                nodes: nodes.iter().copied().collect(),
            });
        }
        Ok(tree)
    }

    fn bfs(&self, root: usize, allowed: &BTreeSet<usize>) -> SpanningTree {
        let mut parent = BTreeMap::new();
        let mut seen = BTreeSet::from([root]);
        let mut order = vec![root];
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[&u] {
                if allowed.contains(&v) && seen.insert(v) {
                    parent.insert(v, u);
                    order.push(v);
                    queue.push_back(v);
                }
            }
        }
        SpanningTree {
            root,
            order,
            parent,
        }
    }
}

/// Rooted spanning tree produced by [`Graph::spanning_tree`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningTree {
    pub root: usize,
    /// Nodes in breadth-first discovery order; `order[0] == root`.
    pub order: Vec<usize>,
    /// Parent of every non-root node.
    pub parent: BTreeMap<usize, usize>,
}

impl SpanningTree {
    /// Tree edges normalized to `(min, max)`.
    pub fn edges(&self) -> BTreeSet<(usize, usize)> {
        self.parent
            .iter()
            .map(|(&c, &p)| (c.min(p), c.max(p)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3() -> Graph {
        Graph::new(5, &[(1, 2), (1, 3), (2, 4), (3, 4), (2, 5), (3, 5)]).unwrap()
    }

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn neighbor_sets() {
        let g = fig3();
        assert_eq!(g.neighbors(1).unwrap(), &set(&[2, 3]));
        assert_eq!(g.neighbors(4).unwrap(), &set(&[2, 3]));
        let empty = Graph::new(3, &[]).unwrap();
        assert!(empty.neighbors(2).unwrap().is_empty());
        assert!(matches!(g.neighbors(6), Err(Error::UnknownNode { .. })));
    }

    #[test]
    fn rejects_loops_and_duplicates() {
        assert!(Graph::new(3, &[(1, 1)]).is_err());
        assert!(Graph::new(3, &[(1, 2), (2, 1)]).is_err());
        assert!(Graph::new(3, &[(1, 4)]).is_err());
    }

    #[test]
    fn induced() {
        let g = fig3();
        assert_eq!(g.induced_subgraph(&set(&[2, 3, 4])).unwrap().edges(), vec![(2, 4), (3, 4)]);
        assert_eq!(g.induced_subgraph(&set(&[2, 4])).unwrap().edges(), vec![(2, 4)]);
        assert_eq!(g.induced_subgraph(&set(&[3])).unwrap().edge_count(), 0);
        assert_eq!(g.induced_subgraph(g.nodes()).unwrap(), g);
        assert!(g.induced_subgraph(&set(&[0])).is_err());
    }

    #[test]
    fn connectivity() {
        let g = fig3();
        assert!(g.is_connected(g.nodes()).unwrap());
        assert!(!g.is_connected(&set(&[1, 4])).unwrap());
        assert!(g.is_connected(&set(&[5])).unwrap());
        assert!(matches!(g.is_connected(&set(&[])), Err(Error::EmptyNodeSet)));
    }

    #[test]
    fn bfs_tree() {
        let g = fig3();
        let t = g.spanning_tree(&set(&[2, 3, 4])).unwrap();
        assert_eq!(t.order, vec![2, 4, 3]);
        assert_eq!(t.edges(), [(2, 4), (3, 4)].into_iter().collect());

        let path = Graph::new(3, &[(1, 2), (2, 3)]).unwrap();
        let t = path.spanning_tree(path.nodes()).unwrap();
        assert_eq!(t.edges(), [(1, 2), (2, 3)].into_iter().collect());

        assert!(g.spanning_tree(&set(&[4])).unwrap().edges().is_empty());
        assert!(matches!(
            g.spanning_tree(&set(&[1, 4])),
            Err(Error::Disconnected { .. })
        ));
    }

    #[test]
    fn grid_shape() {
        let g = Graph::grid(4, 6);
        assert_eq!(g.node_count(), 24);
        assert_eq!(g.edge_count(), 4 * 5 + 3 * 6);
        assert_eq!(g.neighbors(8).unwrap(), &set(&[2, 7, 9, 14]));
    }
}
