//! Reference attackers that ignore the victim.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::generator::median_row_sum;
use crate::graph::{FeatureSpace, Graph};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Uniform feature vector, uniform endpoint in the target's ball.
    Random,
    /// Mean benign feature vector, highest-degree endpoint in the ball.
    Heuristic,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Random => "random",
            Baseline::Heuristic => "heuristic",
        }
    }
}

fn candidates<T: Scalar>(g: &Graph<T>, target: usize, hops: usize) -> Result<Vec<usize>> {
    Ok(g.ball(target, hops)?.into_iter().map(|(v, _)| v).collect())
}

/// The mean clean feature row; on binary data its `k` largest entries
/// are set to one and the rest to zero.
pub fn mean_feature<T: Scalar>(g: &Graph<T>) -> Vec<T> {
    let x = g.base_features();
    let n = T::of(x.nrows().max(1) as f64);
    let mean: Vec<T> = x.columns().into_iter().map(|c| c.iter().copied().sum::<T>() / n).collect();
    match g.feature_space() {
        FeatureSpace::Continuous => mean,
        FeatureSpace::Discrete => {
            let mut order: Vec<usize> = (0..mean.len()).collect();
            order.sort_by(|&a, &b| mean[b].partial_cmp(&mean[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
            let mut out = vec![T::zero(); mean.len()];
            for &j in &order[..median_row_sum(g)] {
                out[j] = T::one();
            }
            out
        }
    }
}

fn random_feature<T: Scalar>(g: &Graph<T>, rng: &mut impl Rng) -> Vec<T> {
    match g.feature_space() {
        FeatureSpace::Discrete => (0..g.dim()).map(|_| if rng.random_bool(0.5) { T::one() } else { T::zero() }).collect(),
        FeatureSpace::Continuous => {
            let x = g.base_features();
            x.columns()
                .into_iter()
                .map(|c| {
                    let lo = c.iter().copied().fold(T::infinity(), T::min).as_f64();
                    let hi = c.iter().copied().fold(T::neg_infinity(), T::max).as_f64();
                    T::of(if hi > lo { rng.random_range(lo..hi) } else { lo })
                })
                .collect()
        }
    }
}

/// Injects `budget` nodes around `target`, each wired to one node of the
/// current `hops`-ball.
pub fn baseline_attack<T: Scalar>(
    kind: Baseline,
    g: &Graph<T>,
    target: usize,
    hops: usize,
    budget: usize,
    seed: u64,
) -> Result<Graph<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = g.clone();
    let mean = mean_feature(g);
    for _ in 0..budget {
        let cands = candidates(&out, target, hops)?;
        let (x, endpoint) = match kind {
            Baseline::Random => (random_feature(g, &mut rng), *cands.choose(&mut rng).expect("the ball holds the target")),
            Baseline::Heuristic => {
                let best = cands
                    .iter()
                    .copied()
                    .max_by(|&a, &b| out.degree(a).cmp(&out.degree(b)).then(b.cmp(&a)))
                    .expect("the ball holds the target");
                (mean.clone(), best)
            }
        };
        out = out.inject_node(&x, endpoint)?;
    }
    Ok(out)
}
