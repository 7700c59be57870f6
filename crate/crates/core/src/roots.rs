//! Bisection on monotone sign predicates.

use crate::tolerances::MAX_BISECTIONS;

/// Bisects [lo, hi] where `above(x)` holds exactly for x past the root.
pub fn bisect<F: FnMut(f64) -> bool>(mut lo: f64, mut hi: f64, abs_tol: f64, mut above: F) -> f64 {
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= abs_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bisection on a log scale for positive brackets; stops at relative width `rel_tol`.
pub fn bisect_geometric<F: FnMut(f64) -> bool>(
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
    mut above: F,
) -> (f64, f64) {
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= rel_tol * hi {
            break;
        }
        let mid = if hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}
