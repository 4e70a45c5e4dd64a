use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type the numerical core is written against.
///
/// Implemented for `f32` and `f64`. Tests and oracles run in `f64`;
/// `f32` is allowed for training runs.
pub trait Scalar:
    NdFloat + FromPrimitive + ToPrimitive + Default + Sum + Debug + Display + Send + Sync + 'static
{
    /// Short precision tag stored in checkpoints.
    const PRECISION: &'static str;

    /// Lossy conversion from `f64`. Never fails for the two supported types.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar always converts to f64")
    }

    /// `ln(1 + exp(x))` without overflow.
    #[inline]
    fn softplus(self) -> Self {
        if self > Self::of(30.0) {
            self
        } else if self < Self::of(-30.0) {
            self.exp()
        } else {
            self.exp().ln_1p()
        }
    }

    #[inline]
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }
}

impl Scalar for f32 {
    const PRECISION: &'static str = "f32";
}

impl Scalar for f64 {
    const PRECISION: &'static str = "f64";
}

/// Numerically stable `log Σ exp(x_i)`. Returns `-inf` on empty input.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let s: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Softmax of a slice. Rows sum to one up to rounding.
pub fn softmax<T: Scalar>(xs: &[T]) -> Vec<T> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|&x| (x - lse).exp()).collect()
}

/// Index of the largest element; ties go to the lowest index.
pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
