/// Bisects `[lo, hi]` on a monotone predicate.
///
/// `go_right(x)` must be true for every `x` left of the root and false for
/// every `x` right of it. Stops when the bracket is narrower than `tol` or
/// when the midpoint can no longer be represented strictly inside it.
pub(crate) fn bisect<F>(mut lo: f64, mut hi: f64, tol: f64, mut go_right: F) -> f64
where
    F: FnMut(f64) -> bool,
{
    debug_assert!(lo <= hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if go_right(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
