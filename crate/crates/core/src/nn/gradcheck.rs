use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Compares an analytic gradient with central differences at `point`.
///
/// `f` returns the function value together with its analytic gradient.
/// The reported error per coordinate is `(|a − n| − r) / max(|a|, |n|, 1e-6)`
/// where `r = 8·ε_mach·max|f(x±h)| / 2h` bounds the rounding error of the
/// difference quotient; the floor keeps coordinates whose true gradient is
/// zero from turning the remaining noise into large relative errors. Results are meaningless
/// within `h` of a non-smooth point (ReLU or Smooth-L1 kinks).
pub fn grad_check<T, F>(mut f: F, point: &[T], h: T) -> Result<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<(T, Vec<T>)>,
{
    let (v0, analytic) = f(point)?;
    if !v0.is_finite() {
        return Err(Error::NonFinite(format!("forward value {v0} at the check point")));
    }
    if analytic.len() != point.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries for {} coordinates",
            analytic.len(),
            point.len()
        )));
    }
    let floor = T::of(1e-6);
    let mut worst = T::zero();
    let mut x = point.to_vec();
    for i in 0..point.len() {
        x[i] = point[i] + h;
        let (fp, _) = f(&x)?;
        x[i] = point[i] - h;
        let (fm, _) = f(&x)?;
        x[i] = point[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("forward value near coordinate {i}")));
        }
        let numeric = (fp - fm) / (h + h);
        let a = analytic[i];
        let noise = T::of(8.0) * T::epsilon() * fp.abs().max(fm.abs()) / (h + h);
        let err = ((a - numeric).abs() - noise).max(T::zero()) / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(err);
    }
    Ok(worst)
}
