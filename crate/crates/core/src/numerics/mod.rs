//! Dense kernels shared by the model, training and evaluation code.
//!
//! Everything is `f64`. Vectors and matrices are plain owned buffers; the
//! hot paths in `model` and `training` work on slices through the
//! `*_into` helpers to avoid reallocating per sample.

pub(crate) mod linalg;
mod rng;

pub use linalg::{affine, glu, sigmoid, softmax, softplus, Matrix, Vector};
pub use rng::SeededRng;

use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `x`.
///
/// Each coordinate is perturbed by `±h` in turn; a non-finite evaluation
/// aborts with [`Error::OracleFailure`].
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(crate::error::invalid(format!(
            "step size must be positive, got {h}"
        )));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::OracleFailure(format!(
                "non-finite evaluation at coordinate {i} (f+ = {plus}, f- = {minus})"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Relative error used by the gradient checks: `|a - b| / max(|a|, |b|, 1e-4)`.
///
/// Below the floor both sides are dominated by finite-difference rounding,
/// so the comparison degrades to an absolute one there.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-4);
    (analytic - numeric).abs() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_square() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn fd_constant_is_zero() {
        let g = finite_diff_grad(|_| 4.2, &[1.0, -2.0, 0.5], 1e-5).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fd_non_finite_is_oracle_failure() {
        let err = finite_diff_grad(|x| 1.0 / (x[0] - 1e-6), &[0.0], 1e-6).unwrap_err();
        assert!(matches!(err, Error::OracleFailure(_)), "{err}");
    }

    #[test]
    fn fd_rejects_bad_step() {
        assert!(finite_diff_grad(|x| x[0], &[0.0], 0.0).is_err());
    }
}
