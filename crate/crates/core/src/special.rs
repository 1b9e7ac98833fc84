//! Scalar special functions: the standard normal tail and friends.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Survival function of a standard normal variable, `Ψ(x) = 1 − Φ(x)`.
pub fn gaussian_tail(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("gaussian_tail of non-finite {x}")));
    }
    Ok(tail(x))
}

/// Unchecked tail; callers guarantee finiteness.
///
/// Positive-term series for `Φ − ½` near the origin, Mills-ratio continued
/// fraction (evaluated backwards) beyond `SERIES_LIMIT`. Relative error stays
/// around 1e-15 out to the subnormal range.
pub(crate) fn tail(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - tail(-x);
    }
    if x <= SERIES_LIMIT {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term > 1e-17 * sum {
            n += 1.0;
            term *= x2 / (2.0 * n + 1.0);
            sum += term;
        }
        return 0.5 - gaussian_density(x) * sum;
    }
    let depth = if x < 3.0 { 200 } else { 60 };
    let mut f = x;
    for k in (1..=depth).rev() {
        f = x + k as f64 / f;
    }
    gaussian_density(x) / f
}

const SERIES_LIMIT: f64 = 1.5;

/// Standard normal distribution function.
pub fn gaussian_cdf(x: f64) -> f64 {
    tail(-x)
}

/// Standard normal density.
pub fn gaussian_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

pub fn binomial(n: u64, r: u64) -> f64 {
    if r > n {
        return 0.0;
    }
    let r = r.min(n - r);
    (0..r).fold(1.0, |acc, k| acc * (n - k) as f64 / (k + 1) as f64)
}
