//! Bracketed root finding and golden-section maximization.

use crate::error::{Error, Result};

/// Bisect `f` on `[lo, hi]` down to bracket width `x_tol`. The bracket must
/// carry a sign change; endpoints that are exact roots short-circuit.
pub fn bisect<F>(f: &F, mut lo: f64, mut hi: f64, x_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if lo > hi {
        return Err(Error::InvalidArgument(format!(
            "reversed bisection bracket [{lo}, {hi}]"
        )));
    }
    let mut f_lo = f(lo)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    let f_hi = f(hi)?;
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo * f_hi > 0.0 {
        return Err(Error::NoBarrierRoot {
            lo,
            hi,
            f_lo,
            f_hi,
        });
    }
    while hi - lo > x_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // bracket exhausted at this float resolution
        }
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid * f_lo < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section maximization of `f` on `[lo, hi]` to an `x_tol` bracket.
/// Assumes unimodality on the bracket; callers verify that separately.
pub fn golden_max<F>(f: &F, mut lo: f64, mut hi: f64, x_tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > x_tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
        if x2 <= x1 {
            break;
        }
    }
    0.5 * (lo + hi)
}
