//! Piecewise-linear monotone curves with linear or vertical tails.

use serde::{Deserialize, Serialize};

use super::{Interval, RelationError};
use crate::scalar::Scalar;

/// How a curve continues past its first or last breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail<T> {
    /// A ray of the given nonnegative slope; `0` is horizontal.
    Slope(T),
    /// A vertical ray; the domain ends at the breakpoint.
    Vertical,
}

impl<T: Scalar> Tail<T> {
    fn swapped(self) -> Self {
        match self {
            Tail::Slope(s) if s > T::zero() => Tail::Slope(T::one() / s),
            Tail::Slope(_) => Tail::Vertical,
            Tail::Vertical => Tail::Slope(T::zero()),
        }
    }
}

/// A monotone polyline through `points` (sorted in both coordinates) plus tails.
///
/// Equal consecutive `u` values describe a vertical segment, equal `y` values
/// a horizontal one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPiecewise<T>", bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PiecewiseLinear<T> {
    points: Vec<(T, T)>,
    left: Tail<T>,
    right: Tail<T>,
}

#[derive(Deserialize)]
struct RawPiecewise<T> {
    points: Vec<(T, T)>,
    left: Tail<T>,
    right: Tail<T>,
}

impl<T: Scalar> TryFrom<RawPiecewise<T>> for PiecewiseLinear<T> {
    type Error = RelationError;
    fn try_from(raw: RawPiecewise<T>) -> Result<Self, RelationError> {
        PiecewiseLinear::new(raw.points, raw.left, raw.right)
    }
}

impl<T: Scalar> PiecewiseLinear<T> {
    /// Checks that breakpoints are finite and nondecreasing in both coordinates
    /// and that tail slopes are finite and nonnegative.
    pub fn new(points: Vec<(T, T)>, left: Tail<T>, right: Tail<T>) -> Result<Self, RelationError> {
        if points.is_empty() {
            return Err(RelationError::NoBreakpoints);
        }
        if points.iter().any(|&(u, y)| !u.is_finite() || !y.is_finite()) {
            return Err(RelationError::NonFinite);
        }
        for (k, w) in points.windows(2).enumerate() {
            if w[1].0 < w[0].0 || w[1].1 < w[0].1 {
                return Err(RelationError::NotMonotone { index: k + 2 });
            }
        }
        for tail in [left, right] {
            if let Tail::Slope(s) = tail {
                if !s.is_finite() {
                    return Err(RelationError::NonFinite);
                }
                if s < T::zero() {
                    return Err(RelationError::NegativeSlope { slope: s.as_f64() });
                }
            }
        }
        Ok(Self { points, left, right })
    }

    /// Skips all validation. Only useful for building counterexamples.
    pub fn new_unchecked(points: Vec<(T, T)>, left: Tail<T>, right: Tail<T>) -> Self {
        Self { points, left, right }
    }

    pub fn points(&self) -> &[(T, T)] {
        &self.points
    }

    pub fn tails(&self) -> (Tail<T>, Tail<T>) {
        (self.left, self.right)
    }

    fn first(&self) -> (T, T) {
        self.points[0]
    }

    fn last(&self) -> (T, T) {
        self.points[self.points.len() - 1]
    }

    pub fn inverse(&self) -> Self {
        Self {
            points: self.points.iter().map(|&(u, y)| (y, u)).collect(),
            left: self.left.swapped(),
            right: self.right.swapped(),
        }
    }

    /// Shifts the graph by `(du, dy)`.
    pub fn translate(&self, du: T, dy: T) -> Self {
        Self {
            points: self.points.iter().map(|&(u, y)| (u + du, y + dy)).collect(),
            left: self.left,
            right: self.right,
        }
    }

    pub fn domain(&self) -> Interval<T> {
        let lo = match self.left {
            Tail::Vertical => self.first().0,
            Tail::Slope(_) => T::neg_infinity(),
        };
        let hi = match self.right {
            Tail::Vertical => self.last().0,
            Tail::Slope(_) => T::infinity(),
        };
        Interval::new(lo, hi)
    }

    pub fn eval_set(&self, u: T) -> Option<Interval<T>> {
        let (u0, y0) = self.first();
        let (un, yn) = self.last();
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        let mut take = |y: T| {
            lo = lo.min(y);
            hi = hi.max(y);
        };
        if u < u0 {
            if let Tail::Slope(s) = self.left {
                take(y0 - s * (u0 - u));
            }
        }
        if u > un {
            if let Tail::Slope(s) = self.right {
                take(yn + s * (u - un));
            }
        }
        if self.points.len() == 1 && u == u0 {
            take(y0);
        }
        for w in self.points.windows(2) {
            let ((ua, ya), (ub, yb)) = (w[0], w[1]);
            if u < ua.min(ub) || u > ua.max(ub) {
                continue;
            }
            if ua == ub {
                take(ya);
                take(yb);
            } else {
                take(ya + (yb - ya) * (u - ua) / (ub - ua));
            }
        }
        if u == u0 && self.left == Tail::Vertical {
            lo = T::neg_infinity();
            hi = hi.max(y0);
        }
        if u == un && self.right == Tail::Vertical {
            hi = T::infinity();
            lo = lo.min(yn);
        }
        (lo <= hi).then(|| Interval::new(lo, hi))
    }

    pub fn is_single_valued(&self) -> bool {
        self.left != Tail::Vertical && self.right != Tail::Vertical && self.points.windows(2).all(|w| w[0].0 != w[1].0)
    }

    pub fn is_strictly_monotone(&self) -> bool {
        self.inverse().is_single_valued()
    }

    /// Smallest slope over segments and tails; vertical pieces count as `+∞`.
    pub fn strong_monotonicity_modulus(&self) -> T {
        let mut m = T::infinity();
        for tail in [self.left, self.right] {
            if let Tail::Slope(s) = tail {
                m = m.min(s);
            }
        }
        for w in self.points.windows(2) {
            let du = w[1].0 - w[0].0;
            if du != T::zero() {
                m = m.min((w[1].1 - w[0].1) / du);
            }
        }
        m
    }

    /// `∫_{u0}^{u} k(s) ds` measured from the first breakpoint, for `u` in the domain.
    pub(crate) fn primitive(&self, u: T) -> T {
        let half = T::lit(0.5);
        let (u0, y0) = self.first();
        if u < u0 {
            let d = u0 - u;
            return match self.left {
                Tail::Slope(s) => -(y0 * d - half * s * d * d),
                Tail::Vertical => T::infinity(),
            };
        }
        let mut acc = T::zero();
        for w in self.points.windows(2) {
            let ((ua, ya), (ub, yb)) = (w[0], w[1]);
            if u <= ua {
                return acc;
            }
            if ub == ua {
                continue;
            }
            let end = u.min(ub);
            let y_end = ya + (yb - ya) * (end - ua) / (ub - ua);
            acc += half * (ya + y_end) * (end - ua);
            if u <= ub {
                return acc;
            }
        }
        let (un, yn) = self.last();
        if u <= un {
            return acc;
        }
        let d = u - un;
        match self.right {
            Tail::Slope(s) => acc + yn * d + half * s * d * d,
            Tail::Vertical => T::infinity(),
        }
    }

    /// `(I + t·k)⁻¹(x)` for `t > 0`.
    pub(crate) fn resolvent(&self, x: T, t: T) -> T {
        // along the curve s = u + t·y is nondecreasing; locate x in it
        let s = |(u, y): (T, T)| u + t * y;
        let (u0, y0) = self.first();
        let s0 = s((u0, y0));
        if x <= s0 {
            return match self.left {
                Tail::Vertical => u0,
                Tail::Slope(sl) => u0 - (s0 - x) / (T::one() + t * sl),
            };
        }
        for w in self.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (sa, sb) = (s(a), s(b));
            if x <= sb {
                if sb == sa {
                    return a.0;
                }
                let lam = (x - sa) / (sb - sa);
                return a.0 + lam * (b.0 - a.0);
            }
        }
        let (un, yn) = self.last();
        let sn = s((un, yn));
        match self.right {
            Tail::Vertical => un,
            Tail::Slope(sl) => un + (x - sn) / (T::one() + t * sl),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sat() -> PiecewiseLinear<f64> {
        PiecewiseLinear::new(vec![(0.0, -1.0), (0.0, 1.0)], Tail::Slope(0.0), Tail::Slope(0.0)).unwrap()
    }

    #[test]
    fn eval_on_saturation_shape() {
        let p = sat();
        assert_eq!(p.eval_set(-2.0), Some(Interval::new(-1.0, -1.0)));
        assert_eq!(p.eval_set(0.0), Some(Interval::new(-1.0, 1.0)));
        assert_eq!(p.eval_set(0.5), Some(Interval::new(1.0, 1.0)));
    }

    #[test]
    fn inverse_has_vertical_rays() {
        let q = sat().inverse();
        assert_eq!(q.domain(), Interval::new(-1.0, 1.0));
        assert_eq!(q.eval_set(0.3), Some(Interval::new(0.0, 0.0)));
        assert_eq!(q.eval_set(1.0), Some(Interval::new(0.0, f64::INFINITY)));
        assert_eq!(q.eval_set(-1.0), Some(Interval::new(f64::NEG_INFINITY, 0.0)));
        assert_eq!(q.eval_set(1.5), None);
    }

    #[test]
    fn primitive_of_abs() {
        let p = sat();
        assert_eq!(p.primitive(2.0), 2.0);
        assert_eq!(p.primitive(-3.0), 3.0);
    }

    #[test]
    fn soft_threshold() {
        let p = sat();
        assert!((p.resolvent(2.0, 0.5) - 1.5).abs() < 1e-15);
        assert_eq!(p.resolvent(0.3, 0.5), 0.0);
        assert!((p.resolvent(-2.0, 0.5) + 1.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_decreasing_points() {
        let r = PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 0.0)], Tail::Slope(0.0), Tail::Slope(0.0));
        assert_eq!(r, Err(RelationError::NotMonotone { index: 2 }));
    }
}
