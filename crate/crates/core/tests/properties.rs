use std::sync::Arc;

use janus_core::discriminator::{Discriminator, DiscriminatorConfig};
use janus_core::eval::roc_auc;
use janus_core::rl::{rollout, AttackEnv, Janus, Policy, TrainConfig};
use janus_core::victim::{train_victim, VictimConfig};
use janus_core::{DataSplit, FeatureSpace, Graph, SubgraphView};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graph_strategy(max_n: usize, dim: usize) -> impl Strategy<Value = Graph<f64>> {
    (2..=max_n).prop_flat_map(move |n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        let m = pairs.len();
        (
            proptest::collection::vec(any::<bool>(), m),
            proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0)], n * dim),
        )
            .prop_map(move |(mask, feats)| {
                let edges: Vec<(usize, usize)> = pairs.iter().zip(&mask).filter(|(_, &k)| k).map(|(&e, _)| e).collect();
                let x = Array2::from_shape_vec((n, dim), feats).unwrap();
                let labels = (0..n).map(|v| v % 2).collect();
                Graph::new(x, &edges, labels, 2, FeatureSpace::Discrete).unwrap()
            })
    })
}

fn distances(g: &Graph<f64>) -> Vec<Vec<usize>> {
    let n = g.num_nodes();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (u, row) in d.iter_mut().enumerate() {
        row[u] = 0;
        for v in 0..n {
            if g.has_edge(u, v) {
                row[v] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn k_hop_matches_all_pairs_distances(g in graph_strategy(12, 2), c in 0usize..12, k in 1usize..4) {
        let c = c % g.num_nodes();
        let d = distances(&g);
        let view = g.k_hop_subgraph(c, k).unwrap();
        let mut got = view.node_ids.clone();
        got.sort_unstable();
        let want: Vec<usize> = (0..g.num_nodes()).filter(|&v| d[c][v] <= k).collect();
        prop_assert_eq!(got, want);
        prop_assert_eq!(view.node_ids[view.center], c);
        for (i, row) in view.adj.iter().enumerate() {
            for j in 0..view.len() {
                prop_assert_eq!(row.contains(&j), g.has_edge(view.node_ids[i], view.node_ids[j]));
            }
        }
    }

    #[test]
    fn normalized_adjacency_is_symmetric_with_unit_spectral_radius(
        g in graph_strategy(12, 1),
        x in proptest::collection::vec(-1.0f64..1.0, 12),
    ) {
        let a = g.normalize_adjacency().to_dense();
        let n = g.num_nodes();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(a[[i, j]], a[[j, i]]);
            }
        }
        let x = &x[..n];
        let quad: f64 = (0..n).map(|i| (0..n).map(|j| x[i] * a[[i, j]] * x[j]).sum::<f64>()).sum();
        let norm: f64 = x.iter().map(|v| v * v).sum();
        prop_assert!(quad.abs() <= norm * (1.0 + 1e-12));
        // D̃^{1/2}·1 is the eigenvector of eigenvalue one.
        let s: Vec<f64> = (0..n).map(|i| ((g.degree(i) + 1) as f64).sqrt()).collect();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| a[[i, j]] * s[j]).sum();
            prop_assert!((row - s[i]).abs() <= 1e-12 * s[i]);
        }
    }

    #[test]
    fn graph_embedding_ignores_node_order(g in graph_strategy(8, 3), seed in 0u64..1000) {
        let disc = Discriminator::<f64>::new(DiscriminatorConfig { hidden: 6 }, 3, 2, 2, 9).unwrap();
        let view = g.k_hop_subgraph(0, 2).unwrap();
        let mut ids = view.node_ids.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(ids.as_mut_slice(), &mut rng);
        let center = ids.iter().position(|&v| v == 0).unwrap();
        let permuted = SubgraphView::induced(&g, ids, center);
        let a = disc.embed_graph(&view).unwrap();
        let b = disc.embed_graph(&permuted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()), "{} vs {}", x, y);
        }
    }

    #[test]
    fn auc_is_invariant_under_strictly_increasing_maps(
        pos in proptest::collection::vec(-3.0f64..3.0, 1..30),
        neg in proptest::collection::vec(-3.0f64..3.0, 1..30),
    ) {
        let base = roc_auc(&pos, &neg).unwrap();
        let cube = |v: &[f64]| v.iter().map(|x| x * x * x + x).collect::<Vec<_>>();
        let exp = |v: &[f64]| v.iter().map(|x| x.exp()).collect::<Vec<_>>();
        prop_assert_eq!(roc_auc(&cube(&pos), &cube(&neg)).unwrap(), base);
        prop_assert_eq!(roc_auc(&exp(&pos), &exp(&neg)).unwrap(), base);
        let flipped = roc_auc(&neg, &pos).unwrap();
        prop_assert!((base + flipped - 1.0).abs() < 1e-12);
    }
}

fn path_graph(n: usize) -> (Graph<f64>, DataSplit) {
    let x = Array2::from_shape_fn((n, 4), |(i, j)| if (i + j) % 3 == 0 { 1.0 } else { 0.0 });
    let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let labels = (0..n).map(|i| (i / 4) % 2).collect();
    let g = Graph::new(x, &edges, labels, 2, FeatureSpace::Discrete).unwrap();
    let split = DataSplit {
        train: (0..n).step_by(2).collect(),
        val: (1..n).step_by(4).collect(),
        test: (3..n).step_by(4).collect(),
        targets: (3..n).step_by(4).collect(),
    };
    (g, split)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn victim_ignores_injections_beyond_two_hops(
        target in 0usize..16,
        endpoint in 0usize..16,
        bits in proptest::collection::vec(prop_oneof![Just(0.0f64), Just(1.0)], 4),
    ) {
        let (g, split) = path_graph(16);
        prop_assume!(target.abs_diff(endpoint) >= 3);
        let v = train_victim(&g, &split, &VictimConfig { hidden: 8, epochs: 5, ..VictimConfig::default() }, 1).unwrap();
        let attacked = g.inject_node(&bits, endpoint).unwrap();
        let before = v.predict_proba(&g, &[target]).unwrap();
        let after = v.predict_proba(&attacked, &[target]).unwrap();
        for (a, b) in before.iter().zip(after.iter()) {
            prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn episodes_inject_exactly_the_budget(budget in 1usize..4, target in 0usize..12, seed in 0u64..100) {
        let (g, split) = path_graph(12);
        let v = train_victim(&g, &split, &VictimConfig { hidden: 8, epochs: 5, ..VictimConfig::default() }, 1).unwrap();
        let mut cfg = TrainConfig { budget, early_success: false, ..TrainConfig::default() };
        cfg.generator.hidden = 8;
        cfg.generator.z_dim = 3;
        let model = Janus::new(&cfg, &g, seed).unwrap();
        let env = AttackEnv::new(Arc::new(v), g.clone(), &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ep = rollout(&env, &model.generator, target, Policy::Sample(&mut rng)).unwrap();
        let fin = ep.final_graph();
        prop_assert_eq!(ep.transitions.len(), budget);
        prop_assert_eq!(fin.num_nodes(), g.num_nodes() + budget);
        prop_assert_eq!(fin.num_edges(), g.num_edges() + budget);
        for u in fin.injected_ids() {
            prop_assert_eq!((0..u).filter(|&w| fin.has_edge(u, w)).count(), 1);
        }
    }
}
