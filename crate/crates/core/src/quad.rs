//! Adaptive Simpson quadrature and bracketing root search.

use crate::error::{Error, Result};
use crate::math::abs;
use alloc::format;

/// Recursion limit for [`adaptive_simpson`]. Intervals below `2^-MAX_DEPTH`
/// of the original width are accepted as-is.
pub const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` with adaptive
/// Simpson and Richardson correction.
///
/// Returns `0.0` for an empty interval and a negated integral when `b < a`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numerical(format!("non-finite bounds [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return adaptive_simpson(f, b, a, tol).map(|v| -v);
    }
    let tol = if tol > 0.0 { tol } else { 1e-12 };
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let v = step(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("non-finite integral over [{a}, {b}]")))
    }
}

#[allow(clippy::too_many_arguments)]
fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return delta;
    }
    if depth == 0 || abs(delta) <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Finds `x` in `[lo, hi]` with `g(x) = target` for a monotone `g`, by
/// bisection until the bracket is narrower than `x_tol` or `max_iter` halvings
/// have been made.
///
/// `increasing` states the direction of `g`. Targets outside the range of `g`
/// over the bracket clamp to the nearer endpoint.
pub fn bisect_monotone<G>(
    g: G,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    increasing: bool,
    x_tol: f64,
    max_iter: u32,
) -> f64
where
    G: Fn(f64) -> f64,
{
    for _ in 0..max_iter {
        if hi - lo <= x_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let below = g(mid) < target;
        if below == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
