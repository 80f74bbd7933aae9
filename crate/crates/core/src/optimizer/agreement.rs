use super::OptimizerError;
use crate::relations::{Interval, MonotoneRelation};
use crate::scalar::Scalar;

const BISECT_TOL: f64 = 1e-12;
const BRACKET_LIMIT: f64 = 1e15;

/// The set of `β` with `0 ∈ Σᵢ k_y,i⁻¹(β)`, i.e. the agreement outputs of a
/// network whose edge controllers enforce `ζ = 0` at steady state.
///
/// Returns `Ok(None)` when the set is empty.
pub fn agreement_value<T: Scalar>(
    node_relations: &[MonotoneRelation<T>],
) -> Result<Option<Interval<T>>, OptimizerError> {
    let inverses: Vec<_> = node_relations.iter().map(MonotoneRelation::inverse).collect();
    // upper end of Σ k⁻¹(β) reaches 0: true to the right of the solution set
    let upper_nonneg = |b: T| {
        let mut s = T::zero();
        for r in &inverses {
            let hi = r.extended_eval(b).hi;
            if hi == T::neg_infinity() {
                return false;
            }
            s += hi;
        }
        s >= T::zero()
    };
    // lower end is at most 0: true to the left of the solution set
    let lower_nonpos = |b: T| {
        let mut s = T::zero();
        for r in &inverses {
            let lo = r.extended_eval(b).lo;
            if lo == T::infinity() {
                return false;
            }
            s += lo;
        }
        s <= T::zero()
    };
    let lo = boundary(|b| !upper_nonneg(b))?;
    let hi = boundary(lower_nonpos)?;
    if lo > hi {
        // a bisection gap below tolerance still counts as a single point
        let mid = T::lit(0.5) * (lo + hi);
        if lo - hi <= T::lit(2.0) * T::tol(BISECT_TOL) * (T::one() + mid.abs()) {
            return Ok(Some(Interval::point(mid)));
        }
        return Ok(None);
    }
    Ok(Some(Interval::new(lo, hi)))
}

/// The switch point of a predicate that is true on the left and false on the right.
fn boundary<T: Scalar>(left: impl Fn(T) -> bool) -> Result<T, OptimizerError> {
    let limit = T::lit(BRACKET_LIMIT);
    let mut a = -T::one();
    while !left(a) {
        a = a + a;
        if a < -limit {
            return Err(OptimizerError::UnboundedBracket { limit: BRACKET_LIMIT });
        }
    }
    let mut b = T::one();
    while left(b) {
        b = b + b;
        if b > limit {
            return Err(OptimizerError::UnboundedBracket { limit: BRACKET_LIMIT });
        }
    }
    for _ in 0..400 {
        let mid = T::lit(0.5) * (a + b);
        if b - a <= T::tol(BISECT_TOL) * (T::one() + mid.abs()) || mid <= a || mid >= b {
            break;
        }
        if left(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(T::lit(0.5) * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relations::{PiecewiseLinear, Tail};

    type R = MonotoneRelation<f64>;

    #[test]
    fn affine_pair_agrees_at_average_of_offsets() {
        let rels = [R::affine(1.0, 1.0).unwrap(), R::affine(1.0, 3.0).unwrap()];
        let iv = agreement_value(&rels).unwrap().unwrap();
        assert!((iv.lo - 2.0).abs() < 1e-11 && (iv.hi - 2.0).abs() < 1e-11);
    }

    #[test]
    fn traffic_nodes_agree_at_mean_velocity() {
        let rels = [R::affine(10.0, 0.0).unwrap(), R::affine(10.0, 50.0).unwrap()];
        let iv = agreement_value(&rels).unwrap().unwrap();
        assert!((iv.lo - 25.0).abs() < 1e-10);
    }

    #[test]
    fn flat_inverse_gives_an_interval() {
        // k⁻¹ is zero on [1, 2], so every β there balances with the opposite node
        let flat = PiecewiseLinear::new(vec![(0.0, 1.0), (0.0, 2.0)], Tail::Slope(1.0), Tail::Slope(1.0)).unwrap();
        // second node: k = {0} × ℝ, so k⁻¹ ≡ 0 everywhere
        let rels = [R::PiecewiseLinear(flat), R::VerticalAt { at: 0.0 }];
        let iv = agreement_value(&rels).unwrap().unwrap();
        assert!((iv.lo - 1.0).abs() < 1e-10 && (iv.hi - 2.0).abs() < 1e-10, "{iv:?}");
    }

    #[test]
    fn disjoint_ranges_are_empty() {
        // outputs confined to [0, 1] and [5, 6]
        let a = PiecewiseLinear::new(vec![(0.0, 0.0), (1.0, 1.0)], Tail::Slope(0.0), Tail::Slope(0.0)).unwrap();
        let b = PiecewiseLinear::new(vec![(0.0, 5.0), (1.0, 6.0)], Tail::Slope(0.0), Tail::Slope(0.0)).unwrap();
        assert_eq!(
            agreement_value(&[R::PiecewiseLinear(a), R::PiecewiseLinear(b)]).unwrap(),
            None
        );
    }

    #[test]
    fn integrators_have_no_bracket() {
        let rels = [R::VerticalAt { at: 0.0 }, R::VerticalAt { at: 0.0 }];
        assert!(matches!(
            agreement_value(&rels),
            Err(OptimizerError::UnboundedBracket { .. })
        ));
    }
}
