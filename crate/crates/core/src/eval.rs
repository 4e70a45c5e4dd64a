//! Attack success and stealth metrics, an isolation-forest detector and a
//! similarity-pruning defense.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::graph::{DataSplit, Graph};
use crate::scalar::Scalar;
use crate::victim::{misclassification_rate, train_victim, VictimConfig};

/// Mean over injected rows of the Euclidean distance to the closest
/// original row.
pub fn cad<T: Scalar>(injected: &[Vec<T>], originals: &[Vec<T>]) -> Result<T> {
    ensure!(!injected.is_empty(), Validation, "cad needs at least one injected feature");
    ensure!(!originals.is_empty(), Validation, "cad needs at least one original feature");
    let mut total = T::zero();
    for x in injected {
        let mut best = T::infinity();
        for o in originals {
            ensure!(o.len() == x.len(), Shape, "feature widths {} and {}", x.len(), o.len());
            let d = sq_dist(x, o).sqrt();
            if d < best {
                best = d;
            }
        }
        total = total + best;
    }
    Ok(total / T::of(injected.len() as f64))
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + (x - y) * (x - y))
}

/// Mean over injected nodes of the average squared feature distance to
/// their neighbours.
pub fn smoothness<T: Scalar>(g: &Graph<T>, injected: &[usize]) -> Result<T> {
    ensure!(!injected.is_empty(), Validation, "smoothness needs at least one injected node");
    let mut total = T::zero();
    for &v in injected {
        g.check_node(v)?;
        let deg = g.degree(v);
        ensure!(deg > 0, Validation, "injected node {v} has no edges");
        let xv = g.feature_row(v);
        let s = g.neighbors(v).fold(T::zero(), |s, u| s + sq_dist(xv, g.feature_row(u)));
        total = total + s / T::of(deg as f64);
    }
    Ok(total / T::of(injected.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub trees: usize,
    pub subsample: usize,
    /// Cap on the benign rows the forest is fitted on.
    pub fit_size: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            subsample: 256,
            fit_size: 1024,
        }
    }
}

#[derive(Debug, Clone)]
enum INode {
    Leaf { size: usize },
    Split { feature: usize, value: f64, left: Box<INode>, right: Box<INode> },
}

/// Average unsuccessful-search path length in a binary search tree of `n`
/// points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (m.ln() + 0.577_215_664_901_532_9) - 2.0 * m / n as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct IsolationForest {
    trees: Vec<INode>,
    sample_size: usize,
    dim: usize,
}

impl IsolationForest {
    pub fn fit(data: &[Vec<f64>], trees: usize, subsample: usize, rng: &mut impl Rng) -> Result<Self> {
        ensure!(!data.is_empty(), Validation, "isolation forest needs data");
        ensure!(trees >= 1 && subsample >= 1, Validation, "trees and subsample must be positive");
        let dim = data[0].len();
        ensure!(data.iter().all(|r| r.len() == dim), Shape, "ragged detector input");
        let psi = subsample.min(data.len());
        let limit = (psi as f64).log2().ceil().max(1.0) as usize;
        let trees = (0..trees)
            .map(|_| {
                let rows: Vec<&[f64]> = sample(rng, data.len(), psi).into_iter().map(|i| data[i].as_slice()).collect();
                grow(&rows, 0, limit, rng)
            })
            .collect();
        Ok(Self {
            trees,
            sample_size: psi,
            dim,
        })
    }

    /// Anomaly score in (0, 1]; higher is more anomalous.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        ensure!(x.len() == self.dim, Shape, "detector expects width {}, got {}", self.dim, x.len());
        let mean = self.trees.iter().map(|t| path_length(t, x, 0)).sum::<f64>() / self.trees.len() as f64;
        let c = average_path_length(self.sample_size);
        Ok(if c > 0.0 { 2f64.powf(-mean / c) } else { 0.5 })
    }
}

fn grow(rows: &[&[f64]], depth: usize, limit: usize, rng: &mut impl Rng) -> INode {
    if depth >= limit || rows.len() <= 1 {
        return INode::Leaf { size: rows.len() };
    }
    let dim = rows[0].len();
    let spread: Vec<(usize, f64, f64)> = (0..dim)
        .filter_map(|j| {
            let (lo, hi) = rows
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
            (hi > lo).then_some((j, lo, hi))
        })
        .collect();
    if spread.is_empty() {
        return INode::Leaf { size: rows.len() };
    }
    let (feature, lo, hi) = spread[rng.random_range(0..spread.len())];
    let value = rng.random_range(lo..hi);
    let (l, r): (Vec<&[f64]>, Vec<&[f64]>) = rows.iter().partition(|row| row[feature] < value);
    INode::Split {
        feature,
        value,
        left: Box::new(grow(&l, depth + 1, limit, rng)),
        right: Box::new(grow(&r, depth + 1, limit, rng)),
    }
}

fn path_length(node: &INode, x: &[f64], depth: usize) -> f64 {
    match node {
        INode::Leaf { size } => depth as f64 + average_path_length(*size),
        INode::Split { feature, value, left, right } => {
            let next = if x[*feature] < *value { left } else { right };
            path_length(next, x, depth + 1)
        }
    }
}

/// ROC AUC of `positives` against `negatives` (Mann-Whitney, ties count
/// one half).
pub fn roc_auc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    ensure!(
        !positives.is_empty() && !negatives.is_empty(),
        Validation,
        "AUC needs both classes ({} positives, {} negatives)",
        positives.len(),
        negatives.len()
    );
    ensure!(
        positives.iter().chain(negatives).all(|s| !s.is_nan()),
        NonFinite,
        "NaN detector score"
    );
    let mut all: Vec<(f64, bool)> = positives.iter().map(|&s| (s, true)).chain(negatives.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        rank_sum += avg * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let (p, n) = (positives.len() as f64, negatives.len() as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Fits an isolation forest on `min(fit_size, n/2)` sampled benign rows
/// and returns the AUC of injected rows as positives against the held-out
/// benign rows, so that neither side is scored in-sample.
pub fn detection_auc<T: Scalar>(injected: &[Vec<T>], benign: &[Vec<T>], cfg: &DetectorConfig, seed: u64) -> Result<f64> {
    ensure!(!injected.is_empty(), Validation, "detection needs injected rows");
    ensure!(benign.len() >= 2, Validation, "detection needs at least two benign rows");
    let widen = |rows: &[Vec<T>]| -> Vec<Vec<f64>> { rows.iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect() };
    let benign = widen(benign);
    let injected = widen(injected);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_fit = vec![false; benign.len()];
    for i in sample(&mut rng, benign.len(), cfg.fit_size.min(benign.len() / 2)) {
        in_fit[i] = true;
    }
    let fit: Vec<Vec<f64>> = benign.iter().zip(&in_fit).filter(|(_, &f)| f).map(|(r, _)| r.clone()).collect();
    let forest = IsolationForest::fit(&fit, cfg.trees, cfg.subsample, &mut rng)?;
    let pos = injected.iter().map(|x| forest.score(x)).collect::<Result<Vec<_>>>()?;
    let neg = benign
        .iter()
        .zip(&in_fit)
        .filter(|(_, &f)| !f)
        .map(|(x, _)| forest.score(x))
        .collect::<Result<Vec<_>>>()?;
    roc_auc(&pos, &neg)
}

/// Cosine similarity, zero when either vector is zero.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let dot = a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y);
    let na = a.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
    let nb = b.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
    if na == T::zero() || nb == T::zero() {
        T::zero()
    } else {
        dot / (na * nb)
    }
}

/// Drops every edge whose endpoint features have cosine similarity below
/// `tau`; `tau = 1` drops all edges.
pub fn prune_dissimilar<T: Scalar>(g: &Graph<T>, tau: f64) -> Result<Graph<T>> {
    ensure!((-1.0..=1.0).contains(&tau), Validation, "defense threshold {tau} outside [-1, 1]");
    let t = T::of(tau);
    Ok(g.filter_edges(|u, v| tau < 1.0 && cosine(g.feature_row(u), g.feature_row(v)) >= t))
}

/// Misclassification of `targets` on `attacked` for a GCN trained on the
/// pruned clean graph and queried on the pruned attacked graph.
pub fn defended_misclassification<T: Scalar>(
    clean: &Graph<T>,
    split: &DataSplit,
    victim: &VictimConfig,
    attacked: &[(usize, Graph<T>)],
    tau: f64,
    seed: u64,
) -> Result<f64> {
    ensure!(!attacked.is_empty(), Validation, "no attacked graphs");
    let model = train_victim(&prune_dissimilar(clean, tau)?, split, victim, seed)?;
    let mut wrong = 0.0;
    for (t, g) in attacked {
        wrong += misclassification_rate(&model, &prune_dissimilar(g, tau)?, &[*t], clean.labels())?;
    }
    Ok(wrong / attacked.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StealthReport {
    pub misclassification: f64,
    pub cad: f64,
    pub smoothness: f64,
    pub detection_auc: f64,
}

/// Metrics over a set of independently attacked graphs, one per target.
pub fn stealth_report<T: Scalar>(
    clean: &Graph<T>,
    attacked: &[(usize, Graph<T>)],
    detector: &DetectorConfig,
    seed: u64,
) -> Result<StealthReport> {
    ensure!(!attacked.is_empty(), Validation, "no attacked graphs");
    let originals: Vec<Vec<T>> = (0..clean.num_original()).map(|v| clean.feature_row(v).to_vec()).collect();
    let mut injected = Vec::new();
    let mut smooth = 0.0;
    for (_, g) in attacked {
        let ids: Vec<usize> = g.injected_ids().collect();
        smooth += smoothness(g, &ids)?.as_f64() * ids.len() as f64;
        injected.extend(ids.iter().map(|&v| g.feature_row(v).to_vec()));
    }
    Ok(StealthReport {
        misclassification: f64::NAN,
        cad: cad(&injected, &originals)?.as_f64(),
        smoothness: smooth / injected.len() as f64,
        detection_auc: detection_auc(&injected, &originals, detector, seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::FeatureSpace;
    use ndarray::array;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn cad_examples() {
        let o = vec![vec![0.0f64, 0.0], vec![2.0, 0.0]];
        assert_eq!(cad(&[vec![0.0, 1.0]], &o).unwrap(), 1.0);
        assert_eq!(cad(&[vec![2.0, 0.0]], &o).unwrap(), 0.0);
        assert!(cad::<f64>(&[], &o).is_err());
    }

    #[test]
    fn smoothness_identical_neighbour() {
        let x = array![[1.0f64, 0.5], [3.0, 0.0]];
        let g = Graph::new(x, &vec![(0, 1)], vec![0, 0], 1, FeatureSpace::Continuous).unwrap();
        let g = g.inject_node(&[1.0, 0.5], 0).unwrap();
        assert_eq!(smoothness(&g, &[2]).unwrap(), 0.0);
    }

    #[test]
    fn smoothness_two_neighbours() {
        let x = array![[1.0f64, 0.0], [0.0, 2.0]];
        let g = Graph::new(x, &vec![], vec![0, 0], 1, FeatureSpace::Continuous).unwrap();
        let g = g.inject_node(&[0.0, 0.0], 0).unwrap();
        let e: Vec<(usize, usize)> = vec![(0, 2), (1, 2)];
        let full = Graph::new(g.features_dense(), &e, vec![0, 0, 0], 1, FeatureSpace::Continuous).unwrap();
        assert_eq!(smoothness(&full, &[2]).unwrap(), 2.5);
        let lonely = Graph::new(g.features_dense(), &vec![(0, 1)], vec![0, 0, 0], 1, FeatureSpace::Continuous).unwrap();
        assert!(smoothness(&lonely, &[2]).is_err());
    }

    #[test]
    fn defense_without_pruning_matches_plain_victim() {
        let (g, split) = crate::experiment::sbm::two_block_sbm::<f64>(&Default::default(), 3).unwrap();
        let cfg = VictimConfig { epochs: 30, ..VictimConfig::default() };
        let attacked: Vec<(usize, Graph<f64>)> = split.targets.iter().map(|&t| (t, g.clone())).collect();
        let d = defended_misclassification(&g, &split, &cfg, &attacked, -1.0, 5).unwrap();
        let m = train_victim(&g, &split, &cfg, 5).unwrap();
        let wrong = split.targets.iter().filter(|&&t| m.predict(&g, &[t]).unwrap()[0] != g.labels()[t]).count();
        assert_eq!(d, wrong as f64 / split.targets.len() as f64);
        assert!(d < 0.5, "{d}");
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[1.0], &[1.0]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[1.0, 3.0], &[2.0, 0.0]).unwrap(), 0.75);
        assert!(roc_auc(&[1.0], &[]).is_err());
    }

    #[test]
    fn path_length_normaliser() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        let h = |n: usize| (1..=n).map(|i| 1.0 / i as f64).sum::<f64>();
        let approx = 2.0 * h(255) - 2.0 * 255.0 / 256.0;
        assert!((average_path_length(256) - approx).abs() < 5e-3);
    }

    fn cloud(n: usize, offset: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let d = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| (0..4).map(|_| d.sample(rng) + offset).collect()).collect()
    }

    #[test]
    fn separable_clouds_are_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let benign = cloud(300, 0.0, &mut rng);
        let far = cloud(30, 100.0, &mut rng);
        let auc = detection_auc(&far, &benign, &DetectorConfig::default(), 1).unwrap();
        assert!(auc >= 0.99, "{auc}");
    }

    #[test]
    fn resampled_benign_rows_are_undetectable() {
        let mut total = 0.0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let benign = cloud(300, 0.0, &mut rng);
            let inj: Vec<Vec<f64>> = (0..100).map(|_| benign[rng.random_range(0..benign.len())].clone()).collect();
            total += detection_auc(&inj, &benign, &DetectorConfig::default(), seed).unwrap();
        }
        let mean = total / 10.0;
        assert!((0.45..=0.55).contains(&mean), "{mean}");
    }

    #[test]
    fn cosine_and_pruning_limits() {
        assert_eq!(cosine(&[0.0f64, 0.0], &[1.0, 1.0]), 0.0);
        assert!((cosine(&[1.0f64, 0.0], &[-1.0, 0.0]) + 1.0).abs() < 1e-15);
        let x = array![[1.0f64, 0.0], [1.0, 0.0], [-1.0, 0.0]];
        let g = Graph::new(x, &vec![(0, 1), (1, 2)], vec![0, 0, 0], 1, FeatureSpace::Continuous).unwrap();
        assert_eq!(prune_dissimilar(&g, -1.0).unwrap().num_edges(), 2);
        assert_eq!(prune_dissimilar(&g, 0.0).unwrap().num_edges(), 1);
        assert_eq!(prune_dissimilar(&g, 1.0).unwrap().num_edges(), 0);
        assert!(prune_dissimilar(&g, 1.5).is_err());
    }
}
