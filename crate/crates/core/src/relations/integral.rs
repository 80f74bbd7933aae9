//! Convex integral `K` of a monotone relation, its conjugate `K*`, and proximal maps.

use super::{Interval, MonotoneRelation};
use crate::scalar::{ln_cosh, Scalar};

/// `K` with `∂K = k` and `K(anchor) = 0`.
///
/// The anchor is `0` when `0` lies in the domain of `k`, otherwise the domain
/// endpoint nearest to `0`. `K` is `+∞` outside the closed domain hull.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexIntegral<T> {
    relation: MonotoneRelation<T>,
    anchor: T,
    // primitive value at the anchor, piecewise-linear relations only
    base: T,
}

/// `½[(1+y)ln(1+y) + (1-y)ln(1-y)]` on `[-1, 1]`, the conjugate of `ln cosh`.
fn entropy_pair<T: Scalar>(y: T) -> T {
    let one = T::one();
    let a = if y == -one { T::zero() } else { (one + y) * y.ln_1p() };
    let b = if y == one { T::zero() } else { (one - y) * (-y).ln_1p() };
    T::lit(0.5) * (a + b)
}

fn saturation_primitive<T: Scalar>(lo: T, hi: T, at: T, u: T) -> T {
    if u >= at {
        hi * (u - at)
    } else {
        lo * (u - at)
    }
}

impl<T: Scalar> ConvexIntegral<T> {
    pub fn new(relation: MonotoneRelation<T>) -> Self {
        let anchor = relation.domain().project(T::zero());
        let base = match relation {
            MonotoneRelation::PiecewiseLinear(ref p) => p.primitive(anchor),
            _ => T::zero(),
        };
        Self { relation, anchor, base }
    }

    pub fn relation(&self) -> &MonotoneRelation<T> {
        &self.relation
    }

    pub fn anchor(&self) -> T {
        self.anchor
    }

    /// Closed domain of `K`.
    pub fn domain(&self) -> Interval<T> {
        self.relation.domain()
    }

    /// Closed domain of `K*`.
    pub fn conjugate_domain(&self) -> Interval<T> {
        self.relation.range()
    }

    pub fn value(&self, u: T) -> T {
        if !self.domain().contains(u) {
            return T::infinity();
        }
        let a = self.anchor;
        let half = T::lit(0.5);
        match self.relation {
            MonotoneRelation::Affine { slope, offset } => half * slope * (u * u - a * a) + offset * (u - a),
            MonotoneRelation::VerticalAt { .. } => T::zero(),
            MonotoneRelation::SignSaturation { lo, hi, at } => {
                saturation_primitive(lo, hi, at, u) - saturation_primitive(lo, hi, at, a)
            }
            MonotoneRelation::Tanh { gain } => (ln_cosh(gain * u) - ln_cosh(gain * a)) / gain,
            MonotoneRelation::InverseTanh { gain } => (entropy_pair(u) - entropy_pair(a)) / gain,
            MonotoneRelation::PiecewiseLinear(ref p) => p.primitive(u) - self.base,
        }
    }

    /// `K*(y) = sup_u { yu - K(u) }`, in closed form per variant.
    pub fn conjugate(&self, y: T) -> T {
        if !self.conjugate_domain().contains(y) {
            return T::infinity();
        }
        let half = T::lit(0.5);
        match self.relation {
            // unbounded domains put the anchor at 0, so no shift appears below
            MonotoneRelation::Affine { slope, offset } => {
                if slope > T::zero() {
                    half * (y - offset) * (y - offset) / slope
                } else {
                    T::zero()
                }
            }
            MonotoneRelation::VerticalAt { at } => y * at,
            MonotoneRelation::SignSaturation { at, .. } => y * at - self.value(at),
            MonotoneRelation::Tanh { gain } => entropy_pair(y) / gain,
            MonotoneRelation::InverseTanh { gain } => ln_cosh(gain * y) / gain,
            MonotoneRelation::PiecewiseLinear(ref p) => {
                // Fenchel equality at any preimage of y
                match p.inverse().eval_set(y) {
                    Some(pre) => {
                        let u = pre.project(self.anchor);
                        y * u - self.value(u)
                    }
                    None => T::infinity(),
                }
            }
        }
    }

    /// [`Self::value`] with `u` snapped onto the domain when it lies within `tol` of it.
    pub fn value_within(&self, u: T, tol: T) -> T {
        let d = self.domain();
        if d.dist(u) <= tol {
            self.value(d.project(u))
        } else {
            T::infinity()
        }
    }

    /// [`Self::conjugate`] with `y` snapped onto the conjugate domain within `tol`.
    pub fn conjugate_within(&self, y: T, tol: T) -> T {
        let d = self.conjugate_domain();
        if d.dist(y) <= tol {
            self.conjugate(d.project(y))
        } else {
            T::infinity()
        }
    }

    /// `argmin_p K(p) + (p - x)²/(2t)`.
    pub fn prox(&self, x: T, t: T) -> T {
        self.relation.resolvent(x, t)
    }

    /// `argmin_p K*(p) + (p - x)²/(2t)`, through the Moreau decomposition.
    pub fn conjugate_prox(&self, x: T, t: T) -> T {
        x - t * self.relation.resolvent(x / t, T::one() / t)
    }

    /// `K(u) + K*(y) - uy`, nonnegative with equality iff `y ∈ k(u)`.
    pub fn fenchel_gap(&self, u: T, y: T) -> T {
        self.value(u) + self.conjugate(y) - u * y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relations::{PiecewiseLinear, Tail};

    type R = MonotoneRelation<f64>;

    #[test]
    fn integral_examples() {
        let k = ConvexIntegral::new(R::affine(10.0, 0.0).unwrap());
        assert_eq!(k.value(1.0), 5.0);
        let t = ConvexIntegral::new(R::tanh(1.0).unwrap());
        assert!((t.value(0.8) - 0.8f64.cosh().ln()).abs() < 1e-15);
        assert_eq!(t.value(0.0), 0.0);
        let v = ConvexIntegral::new(R::VerticalAt { at: 0.0 });
        assert_eq!(v.value(0.0), 0.0);
        assert_eq!(v.value(0.5), f64::INFINITY);
    }

    #[test]
    fn conjugate_examples() {
        let k = ConvexIntegral::new(R::affine(10.0, 50.0).unwrap());
        assert!((k.conjugate(40.0) - 5.0).abs() < 1e-12);
        let abs = ConvexIntegral::new(R::sign_saturation(-1.0, 1.0, 0.0).unwrap());
        assert_eq!(abs.conjugate(0.4), 0.0);
        assert_eq!(abs.conjugate(-1.0), 0.0);
        assert_eq!(abs.conjugate(1.2), f64::INFINITY);
        let t = ConvexIntegral::new(R::tanh(1.0).unwrap());
        assert_eq!(t.conjugate(0.0), 0.0);
        let y = 1f64.tanh();
        assert!((t.conjugate(y) - (y - 1f64.cosh().ln())).abs() < 1e-12);
        assert!((t.conjugate(1.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn prox_examples() {
        let abs = ConvexIntegral::new(R::sign_saturation(-1.0, 1.0, 0.0).unwrap());
        assert!((abs.prox(2.0, 0.5) - 1.5).abs() < 1e-15);
        let t = ConvexIntegral::new(R::tanh(1.0).unwrap());
        assert_eq!(t.prox(0.0, 7.0), 0.0);
        let v = ConvexIntegral::new(R::VerticalAt { at: 0.0 });
        assert_eq!(v.prox(-3.0, 2.0), 0.0);
        // K* of the indicator of {0} is zero, so its prox is the identity
        assert_eq!(v.conjugate_prox(-3.0, 2.0), -3.0);
        // prox of the box indicator is a clamp
        assert_eq!(abs.conjugate_prox(2.5, 0.3), 1.0);
    }

    #[test]
    fn anchor_off_origin() {
        let p = PiecewiseLinear::new(vec![(1.0, 0.0), (2.0, 1.0)], Tail::Vertical, Tail::Slope(1.0)).unwrap();
        let k = ConvexIntegral::new(R::PiecewiseLinear(p));
        assert_eq!(k.anchor(), 1.0);
        assert_eq!(k.value(1.0), 0.0);
        assert!((k.value(2.0) - 0.5).abs() < 1e-15);
        assert_eq!(k.value(0.5), f64::INFINITY);
        // y = 0.5 is attained at u = 1.5 where K = 0.125
        assert!((k.conjugate(0.5) - (0.75 - 0.125)).abs() < 1e-15);
    }
}
