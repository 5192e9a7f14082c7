mod common;

use std::collections::BTreeMap;

use blocklsq::graph::Graph;
use blocklsq::io::{parse_problem, problem_to_string};
use blocklsq::oracle::{DenseMatrix, DenseVector};
use blocklsq::problem::{build_index, split_h, validate, BlockProblem, SplitPolicy};
use blocklsq::reformulation::compile;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random problem on a complete graph, so every induced subgraph is
/// connected. Every agent owns at least one block and every row has one.
fn random_problem(seed: u64) -> (BlockProblem, Graph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.random_range(1..=4);
    let cols = rng.random_range(1..=4);
    let agents = rng.random_range(1..=(rows * cols).min(4));
    let row_dims: Vec<usize> = (0..rows).map(|_| rng.random_range(1..=3)).collect();
    let col_dims: Vec<usize> = (0..cols).map(|_| rng.random_range(1..=3)).collect();
    let mut owners: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for k in 1..=rows {
        for l in 1..=cols {
            if rng.random_bool(0.6) {
                owners.insert((k, l), rng.random_range(1..=agents));
            }
        }
        if !owners.keys().any(|&(r, _)| r == k) {
            owners.insert((k, rng.random_range(1..=cols)), rng.random_range(1..=agents));
        }
    }
    for i in 1..=agents {
        while !owners.values().any(|&o| o == i) {
            let key = (rng.random_range(1..=rows), rng.random_range(1..=cols));
            // never take the last block of another agent or of a row
            let free = match owners.get(&key) {
                None => true,
                Some(&o) => owners.values().filter(|&&x| x == o).count() > 1,
            };
            if free {
                owners.insert(key, i);
            }
        }
    }
    let mut p = BlockProblem::new(row_dims.clone(), col_dims.clone(), agents).unwrap();
    for (&(k, l), &o) in &owners {
        let vals = DenseMatrix::from_fn(row_dims[k - 1], col_dims[l - 1], |_, _| rng.random_range(-1.0..1.0));
        p.add_block(k, l, o, vals).unwrap();
    }
    let idx = build_index(&p).unwrap();
    for k in 1..=rows {
        let h = DenseVector::from_fn(row_dims[k - 1], |_, _| rng.random_range(-5.0..5.0));
        let split = match rng.random_range(0..3) {
            0 => SplitPolicy::Owner,
            1 => SplitPolicy::Equal,
            _ => {
                let members: Vec<usize> = idx.sr(k).iter().copied().collect();
                let mut parts = BTreeMap::new();
                let mut rest = h.clone();
                for &i in &members[1..] {
                    let part = DenseVector::from_fn(h.len(), |_, _| rng.random_range(-1.0..1.0));
                    rest -= &part;
                    parts.insert(i, part);
                }
                parts.insert(members[0], rest);
                SplitPolicy::Explicit(parts)
            }
        };
        p.set_h(k, h, split).unwrap();
    }
    let edges: Vec<(usize, usize)> = (1..=agents).flat_map(|i| (i + 1..=agents).map(move |j| (i, j))).collect();
    (p, Graph::new(agents, &edges).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn file_round_trip(seed in any::<u64>()) {
        let (p, g) = random_problem(seed);
        let text = problem_to_string(&p, &g).unwrap();
        let (p2, g2) = parse_problem(&text).unwrap();
        prop_assert_eq!(&p2, &p);
        prop_assert_eq!(&g2, &g);
    }

    #[test]
    fn splits_add_up(seed in any::<u64>()) {
        let (p, g) = random_problem(seed);
        prop_assert!(validate(&p, &g).passed());
        let idx = build_index(&p).unwrap();
        let split = split_h(&p, &idx).unwrap();
        for k in 1..=p.row_count() {
            let mut sum = DenseVector::zeros(p.row_dim(k));
            for &i in idx.sr(k) {
                sum += &split[&(i, k)];
            }
            let tol = if matches!(p.split(k), SplitPolicy::Explicit(_)) { 1e-12 } else { 0.0 };
            prop_assert!((&sum - p.h(k)).amax() <= tol * (1.0 + p.h(k).amax()));
        }
    }

    #[test]
    fn decomposition_and_lower_bound(seed in any::<u64>()) {
        let (p, g) = random_problem(seed);
        let cp = compile(&p, &g).unwrap();
        let (h, b) = p.assemble_dense();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let z = DenseVector::from_fn(p.n(), |_, _| rng.random_range(-2.0..2.0));
        let central = common::half_sq_residual(&h, &z, &b);
        let mut xs = cp.feasible_point(&z).unwrap();
        let total = cp.total_cost(&xs);
        prop_assert!((total - central).abs() <= 1e-9 * (1.0 + central));
        for (i, j) in cp.graph.edges() {
            let mij = cp.program(i).coupling(j).unwrap().apply(&xs[i - 1]);
            let mji = cp.program(j).coupling(i).unwrap().apply(&xs[j - 1]);
            prop_assert!((mij - mji).amax() <= 1e-10 * (1.0 + central));
        }
        // antisymmetric flow perturbations never go below the centralized cost
        for &eps in &cp.index.coupled {
            for (i, j) in cp.graph.edges() {
                let (Some(ri), Some(rj)) = (
                    cp.program(i).layout.v_range(eps, j),
                    cp.program(j).layout.v_range(eps, i),
                ) else { continue };
                let d = DenseVector::from_fn(ri.len(), |_, _| rng.random_range(-1.0..1.0));
                let vi = xs[i - 1].rows(ri.start, ri.len()) + &d;
                xs[i - 1].rows_mut(ri.start, ri.len()).copy_from(&vi);
                let vj = xs[j - 1].rows(rj.start, rj.len()) - &d;
                xs[j - 1].rows_mut(rj.start, rj.len()).copy_from(&vj);
            }
        }
        prop_assert!(cp.total_cost(&xs) >= central - 1e-9 * (1.0 + central));
    }
}
