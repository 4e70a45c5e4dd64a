use super::tape::{Tape, Var};
use crate::scalar::Scalar;

/// Huber-style loss: `0.5 d²/β` for `|d| < β`, else `|d| − 0.5β`.
pub fn smooth_l1<T: Scalar>(pred: T, target: T, beta: T) -> T {
    debug_assert!(beta > T::zero());
    let d = (pred - target).abs();
    if d < beta {
        T::of(0.5) * d * d / beta
    } else {
        d - T::of(0.5) * beta
    }
}

/// Tape version of [`smooth_l1`] for a `1 × 1` prediction and a constant
/// target. Not differentiable at `|d| = β`.
pub fn smooth_l1_var<T: Scalar>(tape: &mut Tape<T>, pred: Var, target: T, beta: T) -> Var {
    let d = tape.add_const(pred, -target);
    let dv = tape.scalar_value(d);
    if dv.abs() < beta {
        let sq = tape.square(d);
        tape.scale(sq, T::of(0.5) / beta)
    } else {
        let signed = tape.scale(d, dv.signum());
        tape.add_const(signed, -T::of(0.5) * beta)
    }
}
