//! Scalar root finding, scalar maximisation and a small dense LP solver.
//!
//! These are the deterministic numerical kernels used by every estimator and
//! optimiser in the crate. None of them allocate per iteration beyond the LP
//! tableau.

mod simplex;

pub use simplex::{Constraint, LinearProgram, LpSolution, Relation};

use crate::error::{Error, Result};

/// Default cap on bisection iterations.
pub const BISECT_MAX_ITER: usize = 200;

/// Bisection on a bracket with a sign change.
///
/// Stops when the bracket is narrower than `xtol` or stops shrinking in
/// floating point. Returns the midpoint of the final bracket.
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, xtol: f64, max_iter: usize) -> Result<f64> {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::NoRoot(format!("f({a}) = {fa}, f({b}) = {fb}")));
    }
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        if m <= a || m >= b || b - a <= xtol {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximisation of a unimodal function on `[lo, hi]`.
///
/// Ties keep the left sub-interval, and the endpoints are compared with the
/// interior result at the end, so a constant function returns `lo`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, xtol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > xtol {
        if fc >= fd {
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
    let mid = 0.5 * (a + b);
    let mut best = (lo, f(lo));
    for x in [mid, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Grid scan followed by golden-section refinement around the best cell.
///
/// Suitable for rate curves that are unimodal where positive but flat at zero
/// elsewhere. `log_grid` spaces the scan geometrically (requires `lo > 0`).
pub fn scan_then_golden<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    points: usize,
    log_grid: bool,
    xtol: f64,
) -> (f64, f64) {
    let points = points.max(3);
    let grid: Vec<f64> = (0..points)
        .map(|k| {
            let t = k as f64 / (points - 1) as f64;
            if log_grid {
                (lo.ln() + t * (hi.ln() - lo.ln())).exp()
            } else {
                lo + t * (hi - lo)
            }
        })
        .collect();
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let mut k = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[k] {
            k = i;
        }
    }
    let a = grid[k.saturating_sub(1)];
    let b = grid[(k + 1).min(points - 1)];
    let (x, fx) = golden_max(&f, a, b, xtol);
    if fx > values[k] {
        (x, fx)
    } else {
        (grid[k], values[k])
    }
}
