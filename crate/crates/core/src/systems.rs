//! Node systems and edge controllers: dynamics, outputs, equilibrium relations and storage.

use std::fmt::Debug;
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::relations::{ConvexIntegral, MonotoneRelation, PiecewiseLinear, RelationError};
use crate::scalar::{dot, softplus, Scalar};

/// Tolerance for "the equilibrium pair lies on the relation".
pub const ON_RELATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("state matrix A is singular")]
    SingularA,
    #[error("invalid parameter {what} = {value}")]
    InvalidParameter { what: &'static str, value: f64 },
    #[error("equilibrium pair is off the relation by {residual:e}")]
    OffRelation { residual: f64 },
    #[error("equilibrium relation has negative dc gain {gain}")]
    NegativeDcGain { gain: f64 },
    #[error("{0}")]
    Relation(#[from] RelationError),
}

/// Linear node `ẋ = Ax + Bu + Pw`, `y = Cx + Du + Gw` with scalar input, output and forcing.
///
/// Passivity is declared through the storage weight `Q` in `S = ½(x - x̄)ᵀQ(x - x̄)`
/// and the output strictness `ρ`; both are audited numerically, never proved.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineNode<T> {
    a: DenseMatrix<T>,
    b: Vec<T>,
    c: Vec<T>,
    d: T,
    p: Vec<T>,
    g: T,
    w: T,
    q: DenseMatrix<T>,
    rho: T,
}

impl<T: Scalar> AffineNode<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(a: DenseMatrix<T>, b: Vec<T>, c: Vec<T>, d: T, p: Vec<T>, g: T, w: T) -> Result<Self, SystemError> {
        let n = a.rows();
        if a.cols() != n || n == 0 {
            return Err(SystemError::DimensionMismatch {
                what: "A columns",
                expected: n,
                got: a.cols(),
            });
        }
        for (what, v) in [("B", &b), ("C", &c), ("P", &p)] {
            if v.len() != n {
                return Err(SystemError::DimensionMismatch {
                    what,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        let node = Self {
            q: DenseMatrix::identity(n),
            a,
            b,
            c,
            d,
            p,
            g,
            w,
            rho: T::zero(),
        };
        node.dc_gain()?;
        Ok(node)
    }

    /// One-dimensional convenience constructor.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(a: T, b: T, c: T, d: T, p: T, g: T, w: T) -> Result<Self, SystemError> {
        Self::new(
            DenseMatrix::from_row_major(1, 1, vec![a]),
            vec![b],
            vec![c],
            d,
            vec![p],
            g,
            w,
        )
    }

    /// Declares the storage weight and output strictness.
    pub fn with_storage(mut self, q: DenseMatrix<T>, rho: T) -> Result<Self, SystemError> {
        let n = self.state_dim();
        if q.rows() != n || q.cols() != n {
            return Err(SystemError::DimensionMismatch {
                what: "Q",
                expected: n,
                got: q.rows(),
            });
        }
        if !(rho >= T::zero()) {
            return Err(SystemError::InvalidParameter {
                what: "rho",
                value: rho.as_f64(),
            });
        }
        self.q = q;
        self.rho = rho;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn feedthrough(&self) -> T {
        self.d
    }

    fn solve_a(&self, rhs: &[T]) -> Result<Vec<T>, SystemError> {
        self.a.solve(rhs, T::tol(1e-13)).ok_or(SystemError::SingularA)
    }

    /// `(-CA⁻¹B + D, (-CA⁻¹P + G)w)`.
    fn dc_gain(&self) -> Result<(T, T), SystemError> {
        let ab = self.solve_a(&self.b)?;
        let ap = self.solve_a(&self.p)?;
        let slope = self.d - dot(&self.c, &ab);
        let offset = (self.g - dot(&self.c, &ap)) * self.w;
        Ok((slope, offset))
    }

    /// `x̄ = -A⁻¹(Bū + Pw)`.
    fn equilibrium_state(&self, u: T) -> Result<Vec<T>, SystemError> {
        let rhs: Vec<T> = self
            .b
            .iter()
            .zip(&self.p)
            .map(|(&bi, &pi)| -(bi * u + pi * self.w))
            .collect();
        self.solve_a(&rhs)
    }
}

/// A single node of the network.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeSystem<T> {
    Affine(AffineNode<T>),
    /// `ẋ = -f(x) + u + w`, `y = x`, with `f` single valued and strongly monotone.
    ScalarNonlinear {
        f: PiecewiseLinear<T>,
        w: T,
    },
    /// `ẋ = u`, `y = x`.
    Integrator,
    /// Optimal-velocity vehicle `v̇ = κ(-v + V⁰ + V¹u)`, `y = v`.
    Traffic {
        kappa: T,
        v0: T,
        v1: T,
    },
}

impl<T: Scalar> NodeSystem<T> {
    pub fn traffic(kappa: T, v0: T, v1: T) -> Result<Self, SystemError> {
        if !(kappa > T::zero()) || !kappa.is_finite() {
            return Err(SystemError::InvalidParameter {
                what: "kappa",
                value: kappa.as_f64(),
            });
        }
        if !(v1 > T::zero()) || !v1.is_finite() {
            return Err(SystemError::InvalidParameter {
                what: "V1",
                value: v1.as_f64(),
            });
        }
        if !v0.is_finite() {
            return Err(SystemError::InvalidParameter {
                what: "V0",
                value: v0.as_f64(),
            });
        }
        Ok(Self::Traffic { kappa, v0, v1 })
    }

    pub fn scalar_nonlinear(f: PiecewiseLinear<T>, w: T) -> Result<Self, SystemError> {
        let m = f.strong_monotonicity_modulus();
        if !f.is_single_valued() || !(m > T::zero()) {
            return Err(SystemError::InvalidParameter {
                what: "f strong monotonicity modulus",
                value: m.as_f64(),
            });
        }
        Ok(Self::ScalarNonlinear { f, w })
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Self::Affine(n) => n.state_dim(),
            _ => 1,
        }
    }

    /// Whether the output depends on the input directly.
    pub fn has_feedthrough(&self) -> bool {
        matches!(self, Self::Affine(n) if n.d != T::zero())
    }

    fn check(&self, x: &[T]) -> Result<(), SystemError> {
        if x.len() == self.state_dim() {
            Ok(())
        } else {
            Err(SystemError::DimensionMismatch {
                what: "node state",
                expected: self.state_dim(),
                got: x.len(),
            })
        }
    }

    /// Writes `ẋ` into `dx`.
    pub(crate) fn rhs_into(&self, x: &[T], u: T, dx: &mut [T]) {
        match self {
            Self::Affine(n) => {
                let ax = n.a.mul_vec(x);
                for i in 0..x.len() {
                    dx[i] = ax[i] + n.b[i] * u + n.p[i] * n.w;
                }
            }
            Self::ScalarNonlinear { f, w } => {
                let fx = f.eval_set(x[0]).map_or(T::nan(), |iv| iv.lo);
                dx[0] = -fx + u + *w;
            }
            Self::Integrator => dx[0] = u,
            Self::Traffic { kappa, v0, v1 } => dx[0] = *kappa * (-x[0] + *v0 + *v1 * u),
        }
    }

    pub fn rhs(&self, x: &[T], u: T) -> Result<Vec<T>, SystemError> {
        self.check(x)?;
        let mut dx = vec![T::zero(); x.len()];
        self.rhs_into(x, u, &mut dx);
        Ok(dx)
    }

    pub(crate) fn output_unchecked(&self, x: &[T], u: T) -> T {
        match self {
            Self::Affine(n) => dot(&n.c, x) + n.d * u + n.g * n.w,
            _ => x[0],
        }
    }

    pub fn output(&self, x: &[T], u: T) -> Result<T, SystemError> {
        self.check(x)?;
        Ok(self.output_unchecked(x, u))
    }

    /// The steady-state input-output relation `k_y`.
    pub fn equilibrium_relation(&self) -> Result<MonotoneRelation<T>, SystemError> {
        Ok(match self {
            Self::Affine(n) => {
                let (slope, offset) = n.dc_gain()?;
                if slope < T::zero() {
                    return Err(SystemError::NegativeDcGain { gain: slope.as_f64() });
                }
                MonotoneRelation::Affine { slope, offset }
            }
            // y = f⁻¹(u + w)
            Self::ScalarNonlinear { f, w } => MonotoneRelation::PiecewiseLinear(f.translate(T::zero(), -*w).inverse()),
            Self::Integrator => MonotoneRelation::VerticalAt { at: T::zero() },
            Self::Traffic { v0, v1, .. } => MonotoneRelation::Affine {
                slope: *v1,
                offset: *v0,
            },
        })
    }

    /// Output strictness `ρ` in `Ṡ <= -ρ(y - ȳ)² + (y - ȳ)(u - ū)`.
    pub fn strictness(&self) -> T {
        match self {
            Self::Affine(n) => n.rho,
            Self::ScalarNonlinear { f, .. } => f.strong_monotonicity_modulus(),
            Self::Integrator => T::zero(),
            Self::Traffic { v1, .. } => T::one() / *v1,
        }
    }

    fn check_pair(&self, u_bar: T, y_bar: T) -> Result<(), SystemError> {
        let r = self.equilibrium_relation()?.graph_residual(u_bar, y_bar);
        if r <= T::tol(ON_RELATION_TOL) * (T::one() + y_bar.abs()) {
            Ok(())
        } else {
            Err(SystemError::OffRelation { residual: r.as_f64() })
        }
    }

    /// A state `x̄` with `ẋ = 0` and output `ȳ` under input `ū`.
    pub fn equilibrium_state(&self, u_bar: T, y_bar: T) -> Result<Vec<T>, SystemError> {
        self.check_pair(u_bar, y_bar)?;
        match self {
            Self::Affine(n) => n.equilibrium_state(u_bar),
            _ => Ok(vec![y_bar]),
        }
    }

    /// Storage `S(x)` relative to the equilibrium pair `(ū, ȳ)`.
    pub fn storage_value(&self, x: &[T], u_bar: T, y_bar: T) -> Result<T, SystemError> {
        self.check(x)?;
        let xb = self.equilibrium_state(u_bar, y_bar)?;
        Ok(self.storage_at(x, &xb))
    }

    pub(crate) fn storage_at(&self, x: &[T], x_bar: &[T]) -> T {
        let half = T::lit(0.5);
        match self {
            Self::Affine(n) => {
                let e: Vec<T> = x.iter().zip(x_bar).map(|(&a, &b)| a - b).collect();
                half * dot(&e, &n.q.mul_vec(&e))
            }
            Self::Traffic { kappa, v1, .. } => {
                let e = x[0] - x_bar[0];
                e * e / (T::lit(2.0) * *kappa * *v1)
            }
            _ => {
                let e = x[0] - x_bar[0];
                half * e * e
            }
        }
    }

    /// Largest value of `Ṡ + ρ(y - ȳ)² - (y - ȳ)(u - ū)` over the interior samples.
    ///
    /// `states[t]` is the node state at sample `t`; samples are `dt` apart. Ṡ uses
    /// the fourth-order centered difference, so the first and last two samples
    /// are skipped. Returns `-∞` when fewer than five samples are given.
    #[allow(clippy::too_many_arguments)]
    pub fn passivity_residual(
        &self,
        states: &[&[T]],
        u: &[T],
        y: &[T],
        dt: T,
        u_bar: T,
        y_bar: T,
        rho: T,
    ) -> Result<T, SystemError> {
        let xb = self.equilibrium_state(u_bar, y_bar)?;
        for x in states {
            self.check(x)?;
        }
        let s: Vec<T> = states.iter().map(|x| self.storage_at(x, &xb)).collect();
        let supply: Vec<T> = u
            .iter()
            .zip(y)
            .map(|(&ui, &yi)| {
                let ey = yi - y_bar;
                rho * ey * ey - ey * (ui - u_bar)
            })
            .collect();
        Ok(dissipation_residual(&s, &supply, dt))
    }
}

/// `max_t (Ṡ_t + supply_t)` with Ṡ from the five-point centered stencil.
pub(crate) fn dissipation_residual<T: Scalar>(storage: &[T], supply: &[T], dt: T) -> T {
    let eight = T::lit(8.0);
    let twelve = T::lit(12.0);
    let mut worst = T::neg_infinity();
    for t in 2..storage.len().saturating_sub(2) {
        let ds = (storage[t - 2] - eight * storage[t - 1] + eight * storage[t + 1] - storage[t + 2]) / (twelve * dt);
        worst = worst.max(ds + supply[t]);
    }
    worst
}

/// User-supplied edge dynamics `η̇ = φ(η, ζ)`, `μ = ψ(η, ζ)` with scalar state.
pub trait EdgeDynamics<T>: Debug + Send + Sync {
    fn rhs(&self, eta: T, zeta: T) -> T;
    fn output(&self, eta: T, zeta: T) -> T;
    /// The steady-state relation `γ` between `ζ` and `μ`.
    fn equilibrium_relation(&self) -> MonotoneRelation<T>;
    /// Storage relative to the equilibrium pair `(ζ̄, μ̄)`.
    fn storage(&self, eta: T, zeta_bar: T, mu_bar: T) -> T;
    fn has_feedthrough(&self) -> bool {
        false
    }
}

/// A controller on a single edge.
#[derive(Debug, Clone)]
pub enum EdgeController<T> {
    /// `η̇ = ζ`, `μ = ψ(η)`.
    IntegratorCoupling {
        psi: MonotoneRelation<T>,
    },
    /// `η̇ = ζ`, `μ = tanh(η)`.
    TrafficCoupling,
    /// `η̇ = -aη + ζ`, `μ = η`.
    Damped {
        leak: T,
    },
    General(Arc<dyn EdgeDynamics<T>>),
}

impl<T: Scalar> EdgeController<T> {
    /// ψ must be single valued on the whole line.
    pub fn integrator(psi: MonotoneRelation<T>) -> Result<Self, SystemError> {
        psi.validate()?;
        let d = psi.domain();
        if !psi.is_single_valued() || d.lo.is_finite() || d.hi.is_finite() {
            return Err(SystemError::InvalidParameter {
                what: "psi must be a single-valued function on the real line",
                value: f64::NAN,
            });
        }
        Ok(Self::IntegratorCoupling { psi })
    }

    pub fn damped(leak: T) -> Result<Self, SystemError> {
        if !(leak > T::zero()) || !leak.is_finite() {
            return Err(SystemError::InvalidParameter {
                what: "leak",
                value: leak.as_f64(),
            });
        }
        Ok(Self::Damped { leak })
    }

    pub fn has_feedthrough(&self) -> bool {
        match self {
            Self::General(g) => g.has_feedthrough(),
            _ => false,
        }
    }

    pub fn rhs(&self, eta: T, zeta: T) -> T {
        match self {
            Self::IntegratorCoupling { .. } | Self::TrafficCoupling => zeta,
            Self::Damped { leak } => -*leak * eta + zeta,
            Self::General(g) => g.rhs(eta, zeta),
        }
    }

    pub fn output(&self, eta: T, zeta: T) -> T {
        match self {
            Self::IntegratorCoupling { psi } => psi.eval_set(eta).map_or(T::nan(), |iv| iv.lo),
            Self::TrafficCoupling => eta.tanh(),
            Self::Damped { .. } => eta,
            Self::General(g) => g.output(eta, zeta),
        }
    }

    /// The steady-state relation `γ` between tension and flow.
    pub fn equilibrium_relation(&self) -> MonotoneRelation<T> {
        match self {
            Self::IntegratorCoupling { .. } => MonotoneRelation::VerticalAt { at: T::zero() },
            Self::TrafficCoupling => MonotoneRelation::SignSaturation {
                lo: -T::one(),
                hi: T::one(),
                at: T::zero(),
            },
            Self::Damped { leak } => MonotoneRelation::Affine {
                slope: T::one() / *leak,
                offset: T::zero(),
            },
            Self::General(g) => g.equilibrium_relation(),
        }
    }

    /// The coupling nonlinearity ψ as a relation, for controllers of the form `η̇ = ζ`.
    pub fn coupling(&self) -> Option<MonotoneRelation<T>> {
        match self {
            Self::IntegratorCoupling { psi } => Some(psi.clone()),
            Self::TrafficCoupling => Some(MonotoneRelation::Tanh { gain: T::one() }),
            _ => None,
        }
    }

    fn check_pair(&self, zeta_bar: T, mu_bar: T) -> Result<(), SystemError> {
        let r = self.equilibrium_relation().graph_residual(zeta_bar, mu_bar);
        if r <= T::tol(ON_RELATION_TOL) * (T::one() + mu_bar.abs()) {
            Ok(())
        } else {
            Err(SystemError::OffRelation { residual: r.as_f64() })
        }
    }

    /// Storage relative to the equilibrium pair `(ζ̄, μ̄)`.
    ///
    /// Integrator couplings use the Bregman distance of `P = ∫ψ`. For the traffic
    /// coupling at a saturated pair (`|μ̄| = 1`) the reference state is at infinity
    /// and the limit `ln(1 + exp(-2μ̄η))` is used instead.
    pub fn storage_value(&self, eta: T, zeta_bar: T, mu_bar: T) -> Result<T, SystemError> {
        self.check_pair(zeta_bar, mu_bar)?;
        Ok(self.storage_unchecked(eta, zeta_bar, mu_bar))
    }

    pub(crate) fn storage_unchecked(&self, eta: T, zeta_bar: T, mu_bar: T) -> T {
        match self {
            Self::IntegratorCoupling { psi } => bregman(psi, eta, mu_bar),
            Self::TrafficCoupling => {
                let saturated = T::one() - mu_bar.abs() <= T::tol(ON_RELATION_TOL);
                if saturated {
                    softplus(-T::lit(2.0) * mu_bar.signum() * eta)
                } else {
                    bregman(&MonotoneRelation::Tanh { gain: T::one() }, eta, mu_bar)
                }
            }
            Self::Damped { .. } => {
                let e = eta - mu_bar;
                T::lit(0.5) * e * e
            }
            Self::General(g) => g.storage(eta, zeta_bar, mu_bar),
        }
    }

    /// Largest value of `Ẇ - (μ - μ̄)(ζ - ζ̄)` over interior samples, as for nodes.
    pub fn passivity_residual(
        &self,
        eta: &[T],
        zeta: &[T],
        mu: &[T],
        dt: T,
        zeta_bar: T,
        mu_bar: T,
    ) -> Result<T, SystemError> {
        self.check_pair(zeta_bar, mu_bar)?;
        let w: Vec<T> = eta
            .iter()
            .map(|&e| self.storage_unchecked(e, zeta_bar, mu_bar))
            .collect();
        let supply: Vec<T> = zeta
            .iter()
            .zip(mu)
            .map(|(&z, &m)| -(m - mu_bar) * (z - zeta_bar))
            .collect();
        Ok(dissipation_residual(&w, &supply, dt))
    }
}

/// `P(η) - P(η̄) - μ̄(η - η̄)` with `P = ∫ψ` and `η̄ ∈ ψ⁻¹(μ̄)` nearest to `η`.
fn bregman<T: Scalar>(psi: &MonotoneRelation<T>, eta: T, mu_bar: T) -> T {
    let p = ConvexIntegral::new(psi.clone());
    let eta_bar = psi.inverse().eval_set(mu_bar).map_or(T::nan(), |pre| pre.project(eta));
    (p.value(eta) - p.value(eta_bar) - mu_bar * (eta - eta_bar)).max(T::zero())
}
