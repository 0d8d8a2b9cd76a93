//! Bracketing root finders.

use crate::scalar::Scalar;

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Stops when the bracket is narrower than `x_tol` or after `max_iter`
/// halvings. Returns the final bracket `(lo, hi)` with `f(lo)` and `f(hi)` of
/// opposite sign (or one of them zero). `None` if the endpoints do not bracket.
pub fn bisect_bracket<T, F>(mut f: F, mut lo: T, mut hi: T, x_tol: T, max_iter: usize) -> Option<(T, T)>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == T::zero() {
        return Some((lo, lo));
    }
    if f_hi == T::zero() {
        return Some((hi, hi));
    }
    if f_lo.signum() == f_hi.signum() {
        return None;
    }
    for _ in 0..max_iter {
        if (hi - lo).abs() <= x_tol {
            break;
        }
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid == lo || mid == hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == T::zero() {
            return Some((mid, mid));
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some((lo, hi))
}

/// Midpoint of the converged bisection bracket.
pub fn bisect<T, F>(f: F, lo: T, hi: T, x_tol: T, max_iter: usize) -> Option<T>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    bisect_bracket(f, lo, hi, x_tol, max_iter).map(|(a, b)| a + (b - a) / T::lit(2.0))
}

/// Bisection on a monotone predicate: `pred(lo)` false, `pred(hi)` true.
///
/// Returns the final `(lo, hi)` with `pred(lo) == false` and `pred(hi) == true`,
/// narrowed until `hi - lo <= rel_tol * hi`.
pub fn bisect_predicate<T, P>(mut pred: P, mut lo: T, mut hi: T, rel_tol: T, max_iter: usize) -> (T, T)
where
    T: Scalar,
    P: FnMut(T) -> bool,
{
    for _ in 0..max_iter {
        if hi - lo <= rel_tol * hi.abs() {
            break;
        }
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid == lo || mid == hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}
