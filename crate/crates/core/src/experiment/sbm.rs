//! Two-block stochastic block model with class-dependent binary features.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::graph::{DataSplit, FeatureSpace, Graph};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmConfig {
    pub nodes: usize,
    pub dim: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Probability that a bit in the node's own class half is set.
    pub p_signal: f64,
    /// Probability that any other bit is set.
    pub p_noise: f64,
    pub train: usize,
    pub val: usize,
    pub targets: usize,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            nodes: 100,
            dim: 16,
            p_in: 0.02,
            p_out: 0.002,
            p_signal: 0.6,
            p_noise: 0.3,
            train: 20,
            val: 20,
            targets: 40,
        }
    }
}

/// Nodes `0..n/2` form block 0, the rest block 1. Block 0 carries its
/// signal in the first half of the feature bits, block 1 in the second.
pub fn two_block_sbm<T: Scalar>(cfg: &SbmConfig, seed: u64) -> Result<(Graph<T>, DataSplit)> {
    ensure!(cfg.nodes >= 2 && cfg.dim >= 2, Validation, "SBM needs at least 2 nodes and 2 feature dims");
    ensure!(
        cfg.train + cfg.val + cfg.targets <= cfg.nodes,
        Validation,
        "split sizes exceed node count"
    );
    for p in [cfg.p_in, cfg.p_out, cfg.p_signal, cfg.p_noise] {
        ensure!((0.0..=1.0).contains(&p), Validation, "probability {p} outside [0,1]");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.nodes;
    let half = n / 2;
    let labels: Vec<usize> = (0..n).map(|v| usize::from(v >= half)).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { cfg.p_in } else { cfg.p_out };
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let split_bit = cfg.dim / 2;
    let features = Array2::from_shape_fn((n, cfg.dim), |(v, j)| {
        let own = (j < split_bit) == (labels[v] == 0);
        let p = if own { cfg.p_signal } else { cfg.p_noise };
        if rng.random_bool(p) { T::one() } else { T::zero() }
    });
    let g = Graph::new(features, &edges, labels, 2, FeatureSpace::Discrete)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut train = order[..cfg.train].to_vec();
    let mut val = order[cfg.train..cfg.train + cfg.val].to_vec();
    let mut test = order[cfg.train + cfg.val..].to_vec();
    let mut targets = test[..cfg.targets].to_vec();
    for s in [&mut train, &mut val, &mut test, &mut targets] {
        s.sort_unstable();
    }
    let split = DataSplit { train, val, test, targets };
    split.validate(n)?;
    Ok((g, split))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_split() {
        let (g, split) = two_block_sbm::<f64>(&SbmConfig::default(), 1).unwrap();
        assert_eq!(g.num_nodes(), 100);
        assert_eq!(g.dim(), 16);
        assert_eq!(g.num_classes(), 2);
        assert_eq!((split.train.len(), split.val.len(), split.test.len(), split.targets.len()), (20, 20, 60, 40));
        assert!(split.targets.iter().all(|t| split.test.contains(t)));
        let same = g.edges().iter().filter(|(u, v)| g.labels()[*u] == g.labels()[*v]).count();
        assert!(same * 2 > g.num_edges());
    }

    #[test]
    fn seeded() {
        let (a, sa) = two_block_sbm::<f64>(&SbmConfig::default(), 5).unwrap();
        let (b, sb) = two_block_sbm::<f64>(&SbmConfig::default(), 5).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.features_dense(), b.features_dense());
        assert_eq!(sa, sb);
    }

    #[test]
    fn rejects_oversized_split() {
        let cfg = SbmConfig { train: 90, ..SbmConfig::default() };
        assert!(two_block_sbm::<f64>(&cfg, 0).is_err());
    }
}
