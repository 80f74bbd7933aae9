//! Scalar root finding used by the relation calculus.

use crate::scalar::Scalar;

pub(crate) const ROOT_TOL: f64 = 1e-12;
pub(crate) const ROOT_MAX_ITER: usize = 200;

/// Root of a nondecreasing function on `[lo, hi]` with `f(lo) <= 0 <= f(hi)`.
///
/// `f` returns the value and the derivative. Newton steps are taken when they
/// stay inside the current bracket, bisection otherwise.
pub(crate) fn increasing_root<T: Scalar>(f: impl Fn(T) -> (T, T), mut lo: T, mut hi: T) -> T {
    let two = T::lit(2.0);
    let mut x = (lo + hi) / two;
    let mut last_step = hi - lo;
    for _ in 0..ROOT_MAX_ITER {
        let (fx, dfx) = f(x);
        if fx == T::zero() {
            return x;
        }
        if fx < T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let width_tol = T::tol(ROOT_TOL) * (T::one() + x.abs());
        if hi - lo <= width_tol {
            break;
        }
        let newton = x - fx / dfx;
        // Newton only while it at least halves the previous step
        let next = if dfx > T::zero() && newton > lo && newton < hi && two * (newton - x).abs() <= last_step {
            newton
        } else {
            (lo + hi) / two
        };
        last_step = (next - x).abs();
        if (next - x).abs() <= width_tol {
            return next;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stiff_tanh_resolvent_does_not_stall() {
        let (g, t, x) = (1.2580306467963802, 4.862335811140465, 3.656432822929289);
        let f = |p: f64| {
            let th = (g * p).tanh();
            (p + t * th - x, 1.0 + t * g * (1.0 - th * th))
        };
        let p = increasing_root(f, x - t, x + t);
        assert!(f(p).0.abs() < 1e-12, "{p}");
    }

    #[test]
    fn finds_cube_root() {
        let r = increasing_root(|x: f64| (x * x * x - 2.0, 3.0 * x * x), 0.0, 2.0);
        assert!((r - 2f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn survives_flat_derivative() {
        // derivative vanishes at the root, so Newton is slow and bisection must carry it
        let r = increasing_root(|x: f64| (x * x * x, 3.0 * x * x), -1.0, 3.0);
        assert!(r.abs() < 1e-4);
    }
}
