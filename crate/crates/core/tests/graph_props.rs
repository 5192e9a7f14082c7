use std::collections::BTreeSet;

use blocklsq::graph::Graph;
use proptest::prelude::*;

/// Union-find reference for connectivity.
struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..=n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        let p = self.0[x];
        if p == x {
            x
        } else {
            let r = self.find(p);
            self.0[x] = r;
            r
        }
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
    }
}

fn reference_connected(n: usize, edges: &[(usize, usize)], nodes: &BTreeSet<usize>) -> bool {
    let mut d = Dsu::new(n);
    for &(i, j) in edges {
        if nodes.contains(&i) && nodes.contains(&j) {
            d.union(i, j);
        }
    }
    let roots: BTreeSet<usize> = nodes.iter().map(|&i| d.find(i)).collect();
    roots.len() == 1
}

fn instance() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, BTreeSet<usize>)> {
    (1usize..=12).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|i| (i + 1..=n).map(move |j| (i, j))).collect();
        let m = pairs.len();
        (
            Just(n),
            proptest::collection::vec(any::<bool>(), m).prop_map(move |keep| {
                pairs.iter().zip(keep).filter(|(_, k)| *k).map(|(e, _)| *e).collect::<Vec<_>>()
            }),
            proptest::collection::btree_set(1..=n, 1..=n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn connectivity_matches_union_find((n, edges, nodes) in instance()) {
        let g = Graph::new(n, &edges).unwrap();
        prop_assert_eq!(g.is_connected(&nodes).unwrap(), reference_connected(n, &edges, &nodes));
        prop_assert_eq!(g.is_connected(g.nodes()).unwrap(), reference_connected(n, &edges, g.nodes()));
    }

    #[test]
    fn spanning_trees_span((n, edges, nodes) in instance()) {
        let g = Graph::new(n, &edges).unwrap();
        match g.spanning_tree(&nodes) {
            Ok(t) => {
                prop_assert_eq!(t.root, *nodes.iter().next().unwrap());
                prop_assert_eq!(t.order.iter().copied().collect::<BTreeSet<_>>(), nodes.clone());
                let tree_edges = t.edges();
                prop_assert_eq!(tree_edges.len(), nodes.len() - 1);
                for &(a, b) in &tree_edges {
                    prop_assert!(g.has_edge(a, b));
                }
                let te: Vec<_> = tree_edges.into_iter().collect();
                prop_assert!(reference_connected(n, &te, &nodes));
                // parents are discovered before their children
                for (pos, c) in t.order.iter().enumerate().skip(1) {
                    let p = t.parent[c];
                    prop_assert!(t.order[..pos].contains(&p));
                }
            }
            Err(_) => prop_assert!(!reference_connected(n, &edges, &nodes)),
        }
    }

    #[test]
    fn induced_subgraph_edges((n, edges, nodes) in instance()) {
        let g = Graph::new(n, &edges).unwrap();
        let sub = g.induced_subgraph(&nodes).unwrap();
        let want: Vec<_> = edges
            .iter()
            .copied()
            .filter(|(i, j)| nodes.contains(i) && nodes.contains(j))
            .collect();
        let mut want = want;
        want.sort();
        prop_assert_eq!(sub.edges(), want);
        prop_assert_eq!(g.edge_count(), edges.len());
    }
}
