use super::tape::{record_gradient, Var};
use crate::error::{Error, Result};

/// Value and gradient of `f` at `x` by reverse-mode differentiation.
///
/// Returns [`Error::Diverged`] when the value or any gradient entry is not finite.
pub fn gradient(f: impl FnOnce(&[Var]) -> Var, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (v, g) = record_gradient(x, f);
    if !v.is_finite() || g.iter().any(|d| !d.is_finite()) {
        return Err(Error::Diverged("non-finite value or gradient".into()));
    }
    Ok((v, g))
}

/// Central-difference gradient with step `h`.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = xp[i];
            xp[i] = x0 + h;
            let fp = f(&xp);
            xp[i] = x0 - h;
            let fm = f(&xp);
            xp[i] = x0;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
