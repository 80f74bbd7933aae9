//! Maximal monotone relations on the plane and their convex calculus.
//!
//! A relation is a set of pairs `(u, y)`. Evaluation is set-valued and returns a
//! closed [`Interval`]; `None` means the argument is outside the domain.

mod integral;
mod numeric;
mod piecewise;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use integral::ConvexIntegral;
pub(crate) use numeric::increasing_root;
pub use piecewise::{PiecewiseLinear, Tail};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelationError {
    #[error("slope must be nonnegative, got {slope}")]
    NegativeSlope { slope: f64 },
    #[error("gain must be positive, got {gain}")]
    NonPositiveGain { gain: f64 },
    #[error("saturation bounds are inverted: lo = {lo} > hi = {hi}")]
    InvertedBounds { lo: f64, hi: f64 },
    #[error("parameters must be finite")]
    NonFinite,
    #[error("a piecewise-linear relation needs at least one breakpoint")]
    NoBreakpoints,
    #[error("breakpoint {index} decreases in u or y")]
    NotMonotone { index: usize },
}

/// Closed interval with possibly infinite endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        debug_assert!(!(lo > hi), "interval bounds out of order");
        Self { lo, hi }
    }

    pub fn point(x: T) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn real_line() -> Self {
        Self::new(T::neg_infinity(), T::infinity())
    }

    pub fn contains(&self, x: T) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Nearest point of the interval to `x`.
    pub fn project(&self, x: T) -> T {
        x.max(self.lo).min(self.hi)
    }

    pub fn dist(&self, x: T) -> T {
        if self.contains(x) {
            T::zero()
        } else {
            (x - self.project(x)).abs()
        }
    }

    pub fn hull(&self, other: &Self) -> Self {
        Self::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn inflate(&self, r: T) -> Self {
        Self::new(self.lo - r, self.hi + r)
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }
}

/// A point `(u, y)` on the graph of a relation.
pub type GraphPoint<T> = (T, T);

/// Worst violation found by [`MonotoneRelation::monotonicity_audit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityAudit<T> {
    pub monotone: bool,
    /// The pair minimising `(u - u')(y - y')`, with that product.
    pub worst: Option<(GraphPoint<T>, GraphPoint<T>, T)>,
}

/// A maximal monotone relation on the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "type",
    rename_all = "snake_case",
    bound(serialize = "T: Serialize", deserialize = "T: Scalar + Deserialize<'de>")
)]
pub enum MonotoneRelation<T> {
    /// `y = slope·u + offset` on the whole line.
    Affine {
        slope: T,
        offset: T,
    },
    /// The vertical line `u = at`.
    VerticalAt {
        at: T,
    },
    /// `lo` left of `at`, the segment `[lo, hi]` at `at`, `hi` to the right.
    SignSaturation {
        lo: T,
        hi: T,
        at: T,
    },
    /// `y = tanh(gain·u)`.
    Tanh {
        gain: T,
    },
    /// `y = artanh(u)/gain` on `(-1, 1)`, the inverse of [`MonotoneRelation::Tanh`].
    InverseTanh {
        gain: T,
    },
    PiecewiseLinear(PiecewiseLinear<T>),
}

impl<T: Scalar> MonotoneRelation<T> {
    pub fn affine(slope: T, offset: T) -> Result<Self, RelationError> {
        let r = Self::Affine { slope, offset };
        r.validate()?;
        Ok(r)
    }

    pub fn sign_saturation(lo: T, hi: T, at: T) -> Result<Self, RelationError> {
        let r = Self::SignSaturation { lo, hi, at };
        r.validate()?;
        Ok(r)
    }

    pub fn tanh(gain: T) -> Result<Self, RelationError> {
        let r = Self::Tanh { gain };
        r.validate()?;
        Ok(r)
    }

    /// Checks parameter constraints; deserialized values should pass through here.
    pub fn validate(&self) -> Result<(), RelationError> {
        let finite = |xs: &[T]| xs.iter().all(|x| x.is_finite());
        match *self {
            Self::Affine { slope, offset } => {
                if !finite(&[slope, offset]) {
                    return Err(RelationError::NonFinite);
                }
                if slope < T::zero() {
                    return Err(RelationError::NegativeSlope { slope: slope.as_f64() });
                }
            }
            Self::VerticalAt { at } => {
                if !at.is_finite() {
                    return Err(RelationError::NonFinite);
                }
            }
            Self::SignSaturation { lo, hi, at } => {
                if !finite(&[lo, hi, at]) {
                    return Err(RelationError::NonFinite);
                }
                if lo > hi {
                    return Err(RelationError::InvertedBounds {
                        lo: lo.as_f64(),
                        hi: hi.as_f64(),
                    });
                }
            }
            Self::Tanh { gain } | Self::InverseTanh { gain } => {
                if !gain.is_finite() {
                    return Err(RelationError::NonFinite);
                }
                if gain <= T::zero() {
                    return Err(RelationError::NonPositiveGain { gain: gain.as_f64() });
                }
            }
            Self::PiecewiseLinear(ref p) => {
                PiecewiseLinear::new(p.points().to_vec(), p.tails().0, p.tails().1)?;
            }
        }
        Ok(())
    }

    /// Value set at `u`; `None` outside the domain.
    pub fn eval_set(&self, u: T) -> Option<Interval<T>> {
        match *self {
            Self::Affine { slope, offset } => Some(Interval::point(slope * u + offset)),
            Self::VerticalAt { at } => (u == at).then(Interval::real_line),
            Self::SignSaturation { lo, hi, at } => Some(if u < at {
                Interval::point(lo)
            } else if u > at {
                Interval::point(hi)
            } else {
                Interval::new(lo, hi)
            }),
            Self::Tanh { gain } => Some(Interval::point((gain * u).tanh())),
            Self::InverseTanh { gain } => (u.abs() < T::one()).then(|| Interval::point(u.atanh() / gain)),
            Self::PiecewiseLinear(ref p) => p.eval_set(u),
        }
    }

    /// Value set with the domain extended by `-∞` to its left and `+∞` to its right.
    pub fn extended_eval(&self, u: T) -> Interval<T> {
        if let Some(iv) = self.eval_set(u) {
            return iv;
        }
        let d = self.domain();
        let right_side = match self {
            // the open ends of artanh: the value escapes towards the nearer infinity
            Self::InverseTanh { .. } => u > T::zero(),
            _ => u > d.hi,
        };
        if right_side {
            Interval::point(T::infinity())
        } else {
            Interval::point(T::neg_infinity())
        }
    }

    /// Closed hull of the domain.
    pub fn domain(&self) -> Interval<T> {
        match *self {
            Self::VerticalAt { at } => Interval::point(at),
            Self::InverseTanh { .. } => Interval::new(-T::one(), T::one()),
            Self::PiecewiseLinear(ref p) => p.domain(),
            _ => Interval::real_line(),
        }
    }

    /// Closed hull of the range, i.e. of the inverse's domain.
    pub fn range(&self) -> Interval<T> {
        self.inverse().domain()
    }

    /// The transposed relation `{(y, u) : (u, y) ∈ self}`.
    pub fn inverse(&self) -> Self {
        match *self {
            Self::Affine { slope, offset } => {
                if slope > T::zero() {
                    Self::Affine {
                        slope: T::one() / slope,
                        offset: -offset / slope,
                    }
                } else {
                    Self::VerticalAt { at: offset }
                }
            }
            Self::VerticalAt { at } => Self::Affine {
                slope: T::zero(),
                offset: at,
            },
            Self::Tanh { gain } => Self::InverseTanh { gain },
            Self::InverseTanh { gain } => Self::Tanh { gain },
            Self::SignSaturation { .. } => Self::PiecewiseLinear(self.to_piecewise().expect("polyhedral").inverse()),
            Self::PiecewiseLinear(ref p) => Self::PiecewiseLinear(p.inverse()),
        }
    }

    /// Piecewise-linear form of the polyhedral variants; `None` for the smooth ones.
    pub fn to_piecewise(&self) -> Option<PiecewiseLinear<T>> {
        Some(match *self {
            Self::Affine { slope, offset } => {
                PiecewiseLinear::new_unchecked(vec![(T::zero(), offset)], Tail::Slope(slope), Tail::Slope(slope))
            }
            Self::VerticalAt { at } => {
                PiecewiseLinear::new_unchecked(vec![(at, T::zero())], Tail::Vertical, Tail::Vertical)
            }
            Self::SignSaturation { lo, hi, at } => {
                PiecewiseLinear::new_unchecked(vec![(at, lo), (at, hi)], Tail::Slope(T::zero()), Tail::Slope(T::zero()))
            }
            Self::PiecewiseLinear(ref p) => p.clone(),
            Self::Tanh { .. } | Self::InverseTanh { .. } => return None,
        })
    }

    pub fn is_single_valued(&self) -> bool {
        match *self {
            Self::Affine { .. } | Self::Tanh { .. } | Self::InverseTanh { .. } => true,
            Self::VerticalAt { .. } => false,
            Self::SignSaturation { lo, hi, .. } => lo == hi,
            Self::PiecewiseLinear(ref p) => p.is_single_valued(),
        }
    }

    /// No two distinct arguments share a value.
    pub fn is_strictly_monotone(&self) -> bool {
        match *self {
            Self::Affine { slope, .. } => slope > T::zero(),
            Self::VerticalAt { .. } | Self::Tanh { .. } | Self::InverseTanh { .. } => true,
            Self::SignSaturation { .. } => false,
            Self::PiecewiseLinear(ref p) => p.is_strictly_monotone(),
        }
    }

    /// Largest `m` with `(u - u')(y - y') >= m (u - u')²` on the graph.
    pub fn strong_monotonicity_modulus(&self) -> T {
        match *self {
            Self::Affine { slope, .. } => slope,
            Self::VerticalAt { .. } => T::infinity(),
            Self::SignSaturation { .. } | Self::Tanh { .. } => T::zero(),
            Self::InverseTanh { gain } => T::one() / gain,
            Self::PiecewiseLinear(ref p) => p.strong_monotonicity_modulus(),
        }
    }

    /// Distance of `(u, y)` from the graph, measured along either axis.
    pub fn graph_residual(&self, u: T, y: T) -> T {
        let dy = self.eval_set(u).map_or(T::infinity(), |iv| iv.dist(y));
        let du = self.inverse().eval_set(y).map_or(T::infinity(), |iv| iv.dist(u));
        dy.min(du)
    }

    /// Checks `(u - u')(y - y') >= 0` over all pairs of graph points above `samples`.
    ///
    /// Both ends of every value interval are included; infinite ends are skipped.
    pub fn monotonicity_audit(&self, samples: &[T]) -> MonotonicityAudit<T> {
        let mut pts = Vec::new();
        for &u in samples {
            if let Some(iv) = self.eval_set(u) {
                for y in [iv.lo, iv.hi] {
                    if y.is_finite() {
                        pts.push((u, y));
                    }
                }
            }
        }
        let mut worst: Option<(GraphPoint<T>, GraphPoint<T>, T)> = None;
        for (a, &p) in pts.iter().enumerate() {
            for &q in &pts[a + 1..] {
                let prod = (p.0 - q.0) * (p.1 - q.1);
                if worst.is_none_or(|w| prod < w.2) {
                    worst = Some((p, q, prod));
                }
            }
        }
        let monotone = worst.is_none_or(|w| {
            let scale = (T::one() + w.0 .0.abs() + w.1 .0.abs()) * (T::one() + w.0 .1.abs() + w.1 .1.abs());
            w.2 >= -T::tol(1e-12) * scale
        });
        MonotonicityAudit { monotone, worst }
    }

    /// `(I + t·self)⁻¹(x)`, the unique `p` with `x - p ∈ t·self(p)`.
    pub fn resolvent(&self, x: T, t: T) -> T {
        debug_assert!(t > T::zero());
        match *self {
            Self::Affine { slope, offset } => (x - t * offset) / (T::one() + t * slope),
            Self::VerticalAt { at } => at,
            Self::SignSaturation { lo, hi, at } => {
                if x < at + t * lo {
                    x - t * lo
                } else if x > at + t * hi {
                    x - t * hi
                } else {
                    at
                }
            }
            Self::Tanh { gain } => increasing_root(
                |p: T| {
                    let th = (gain * p).tanh();
                    (p + t * th - x, T::one() + t * gain * (T::one() - th * th))
                },
                x - t,
                x + t,
            ),
            // Moreau decomposition against the tanh resolvent
            Self::InverseTanh { gain } => {
                let q = Self::Tanh { gain }.resolvent(x / t, T::one() / t);
                x - t * q
            }
            Self::PiecewiseLinear(ref p) => p.resolvent(x, t),
        }
    }
}
