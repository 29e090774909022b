//! Scalar root finding for the column pricing step.
//!
//! Solves sum_m a_m * Z^{p_m} = target over Z >= 0 with a_m >= 0 and
//! p_m > 0. The left side is zero at Z = 0 and strictly increasing whenever
//! some a_m is positive, so the root exists and is unique for any
//! nonnegative target.

use crate::error::{Error, Result};

/// Evaluates f(Z) = sum a_m Z^{p_m} - target for Z >= 0.
fn residual(terms: &[(f64, f64)], z: f64, target: f64) -> f64 {
    let mut s = 0.0;
    for &(a, p) in terms {
        s += a * z.powf(p);
    }
    s - target
}

fn derivative(terms: &[(f64, f64)], z: f64) -> f64 {
    let mut s = 0.0;
    for &(a, p) in terms {
        s += a * p * z.powf(p - 1.0);
    }
    s
}

/// Newton iteration with a positivity safeguard and bisection fallback.
///
/// `warm_start` seeds the iteration (any non-positive or non-finite value
/// falls back to 1). Convergence means |f(Z)| <= tol * max(1, target). Raw
/// Newton steps that leave (0, inf) are replaced by a halving step; after
/// three such rejections, or when `max_iter` runs out, the solver brackets
/// the root by doubling and bisects. `NonConvergence` is reported only if
/// even the bracketed bisection cannot meet the tolerance.
pub fn newton_root(
    terms: &[(f64, f64)],
    target: f64,
    warm_start: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    if !target.is_finite() || target < 0.0 {
        return Err(Error::InvalidInput(format!(
            "root target must be finite and >= 0, got {target}"
        )));
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::InvalidInput(format!("root tolerance must be > 0, got {tol}")));
    }
    let mut active = Vec::with_capacity(terms.len());
    for &(a, p) in terms {
        if !a.is_finite() || a < 0.0 {
            return Err(Error::InvalidInput(format!(
                "coefficient {a} must be finite and >= 0"
            )));
        }
        if !p.is_finite() || p <= 0.0 {
            return Err(Error::InvalidInput(format!("exponent {p} must be finite and > 0")));
        }
        if a > 0.0 {
            active.push((a, p));
        }
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    if active.is_empty() {
        return Err(Error::InvalidInput(
            "target is positive but every coefficient is zero".into(),
        ));
    }

    let scale = target.max(1.0);
    let mut z = if warm_start.is_finite() && warm_start > 0.0 { warm_start } else { 1.0 };
    let mut rejections = 0;
    for _ in 0..max_iter {
        let f = residual(&active, z, target);
        if f.abs() <= tol * scale {
            return Ok(z);
        }
        let d = derivative(&active, z);
        let raw = if f.is_finite() && d.is_finite() && d > 0.0 { z - f / d } else { f64::NAN };
        if raw.is_finite() && raw > 0.0 {
            z = raw;
        } else {
            // Overshoot past zero (or overflow): the monotone shape tells us
            // which side of z the root is on.
            rejections += 1;
            z = if f > 0.0 || !f.is_finite() { 0.5 * z } else { 2.0 * z };
            if rejections >= 3 {
                return bisect(&active, target, tol, z);
            }
        }
    }
    bisect(&active, target, tol, z)
}

/// Bisection on [0, hi] with hi doubled until it brackets the root. f(0) is
/// -target < 0, so only the upper end needs searching.
fn bisect(terms: &[(f64, f64)], target: f64, tol: f64, hint: f64) -> Result<f64> {
    let scale = target.max(1.0);
    let mut hi = if hint.is_finite() && hint > 0.0 { hint } else { 1.0 };
    let mut f_hi = residual(terms, hi, target);
    let mut doublings = 0;
    while f_hi < 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 1100 || !hi.is_finite() {
            return Err(Error::NonConvergence { last: hi, residual: f_hi.abs(), tol });
        }
        f_hi = residual(terms, hi, target);
    }
    let mut lo = 0.0_f64;
    for _ in 0..1200 {
        let mid = 0.5 * (lo + hi);
        let f = residual(terms, mid, target);
        if f.abs() <= tol * scale {
            return Ok(mid);
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    let f = residual(terms, mid, target);
    if f.abs() <= tol * scale {
        Ok(mid)
    } else {
        Err(Error::NonConvergence { last: mid, residual: f.abs(), tol })
    }
}
