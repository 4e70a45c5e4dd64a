use rand::Rng;

use crate::error::{ensure, Result};
use crate::scalar::{argmax, softmax, Scalar};

/// Standard Gumbel draws `-ln(-ln u)`.
pub fn sample_gumbel<T: Scalar>(n: usize, rng: &mut impl Rng) -> Vec<T> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            T::of(-(-u.ln()).ln())
        })
        .collect()
}

/// Relaxed sample `softmax((logits + g) / τ)` for given Gumbel noise.
/// With `hard`, returns the one-hot argmax instead (the value used by the
/// straight-through estimator; its gradient is the soft sample's).
pub fn gumbel_softmax<T: Scalar>(logits: &[T], noise: &[T], tau: T, hard: bool) -> Result<Vec<T>> {
    ensure!(tau > T::zero(), Validation, "temperature must be positive, got {tau}");
    ensure!(
        logits.len() == noise.len(),
        Shape,
        "{} logits, {} noise draws",
        logits.len(),
        noise.len()
    );
    let perturbed: Vec<T> = logits.iter().zip(noise).map(|(&l, &g)| (l + g) / tau).collect();
    if hard {
        let k = argmax(&perturbed);
        Ok((0..logits.len()).map(|i| if i == k { T::one() } else { T::zero() }).collect())
    } else {
        Ok(softmax(&perturbed))
    }
}

pub fn gumbel_softmax_sample<T: Scalar>(logits: &[T], tau: T, hard: bool, rng: &mut impl Rng) -> Result<Vec<T>> {
    let noise = sample_gumbel(logits.len(), rng);
    gumbel_softmax(logits, &noise, tau, hard)
}

/// Indices of the `k` largest perturbed logits, in decreasing order. This is
/// a draw without replacement from the Plackett-Luce model on `logits`.
pub fn gumbel_top_k<T: Scalar>(logits: &[T], noise: &[T], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    let key = |i: usize| logits[i] + noise[i];
    idx.sort_by(|&a, &b| key(b).partial_cmp(&key(a)).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
