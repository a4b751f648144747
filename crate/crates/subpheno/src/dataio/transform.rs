//! Yeo-Johnson power transformation.
//!
//! The transform maps any real input monotonically, with the exponent
//! `lambda` chosen per column by maximizing the profile log-likelihood of a
//! normal model on the transformed values (including the Jacobian term).
//! `lambda = 1` is the identity; `lambda = 0` behaves like `ln(x + 1)` on
//! the nonnegative side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Search bracket for the exponent.
pub const LAMBDA_MIN: f64 = -5.0;
pub const LAMBDA_MAX: f64 = 5.0;
/// Golden-section tolerance on lambda.
const GOLDEN_TOL: f64 = 1e-4;

/// Fitted per-column transform parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YeoJohnsonParams {
    pub lambda: f64,
    /// Range of the training column, kept so callers can spot
    /// extrapolation when applying the transform to new data.
    pub fit_min: f64,
    pub fit_max: f64,
}

/// Transform a single value.
pub fn yj_apply(x: f64, lambda: f64) -> f64 {
    if x >= 0.0 {
        if lambda.abs() < 1e-12 {
            x.ln_1p()
        } else {
            // ((x+1)^l - 1) / l, written via exp/ln_1p for precision.
            f64::exp_m1(lambda * x.ln_1p()) / lambda
        }
    } else {
        let two_ml = 2.0 - lambda;
        if two_ml.abs() < 1e-12 {
            -(-x).ln_1p()
        } else {
            -f64::exp_m1(two_ml * (-x).ln_1p()) / two_ml
        }
    }
}

/// Invert the transform; `yj_inverse(yj_apply(x, l), l) == x` up to
/// floating-point round-off.
pub fn yj_inverse(y: f64, lambda: f64) -> f64 {
    if y >= 0.0 {
        if lambda.abs() < 1e-12 {
            y.exp_m1()
        } else {
            f64::exp_m1((lambda * y).ln_1p() / lambda)
        }
    } else {
        let two_ml = 2.0 - lambda;
        if two_ml.abs() < 1e-12 {
            -(-y).exp_m1()
        } else {
            -f64::exp_m1((-two_ml * y).ln_1p() / two_ml)
        }
    }
}

/// Profile log-likelihood of `lambda` for the given observations: normal
/// likelihood of the transformed values plus the log-Jacobian of the
/// transform.
pub fn yj_loglik(column: &[f64], lambda: f64) -> f64 {
    let n = column.len() as f64;
    let mut transformed = Vec::with_capacity(column.len());
    let mut log_jacobian = 0.0;
    for &x in column {
        transformed.push(yj_apply(x, lambda));
        // d/dx yj(x) = (x+1)^(l-1) for x >= 0, (1-x)^(1-l) for x < 0.
        log_jacobian += (lambda - 1.0) * x.signum() * x.abs().ln_1p();
    }
    let mean = transformed.iter().sum::<f64>() / n;
    let var = transformed.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 || !var.is_finite() {
        return f64::NEG_INFINITY;
    }
    -0.5 * n * ((2.0 * std::f64::consts::PI * var).ln() + 1.0) + log_jacobian
}

/// Fit `lambda` by golden-section search on [-5, 5].
///
/// Requires at least two distinct finite values; a constant column has no
/// informative likelihood and is rejected.
pub fn yj_fit(column: &[f64]) -> Result<YeoJohnsonParams> {
    yj_fit_named(column, "<unnamed>")
}

/// Like [`yj_fit`] but reports the column name on error.
pub fn yj_fit_named(column: &[f64], name: &str) -> Result<YeoJohnsonParams> {
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "column `{name}` contains non-finite values"
        )));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in column {
        min = min.min(v);
        max = max.max(v);
    }
    if column.len() < 2 || min == max {
        return Err(Error::ConstantColumn(name.to_string()));
    }

    let lambda = golden_section_max(|l| yj_loglik(column, l), LAMBDA_MIN, LAMBDA_MAX, GOLDEN_TOL);
    Ok(YeoJohnsonParams {
        lambda,
        fit_min: min,
        fit_max: max,
    })
}

/// Golden-section maximization of a unimodal function on [lo, hi].
fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
