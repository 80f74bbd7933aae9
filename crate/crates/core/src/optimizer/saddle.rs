use super::OptimizerError;
use crate::graph::IncidenceMatrix;
use crate::linalg::spectral_radius;
use crate::scalar::{max_abs, Scalar};

const GRAD_TOL: f64 = 1e-10;
const MAX_ITER: usize = 2_000_000;

/// Saddle point of `Σ (yᵢ - V⁰ᵢ)²/(2V¹ᵢ) + μᵀEᵀy` over `y ∈ ℝⁿ`, `μ ∈ [-1, 1]ᵐ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSolution<T> {
    pub y: Vec<T>,
    pub mu: Vec<T>,
    pub iterations: usize,
    /// Final projected-gradient norm.
    pub residual: T,
}

/// Projected gradient ascent on the concave dual `g(μ)` with `y(μ) = V⁰ - V¹ ⊙ Eμ`.
///
/// The step is `1/L` with `L = max V¹ · λ_max(EEᵀ)`.
pub fn saddle_point<T: Scalar>(e: &IncidenceMatrix, v0: &[T], v1: &[T]) -> Result<SaddleSolution<T>, OptimizerError> {
    let (n, m) = (e.node_count(), e.edge_count());
    if v0.len() != n || v1.len() != n {
        return Err(OptimizerError::CountMismatch {
            what: "free-flow velocities",
            expected: n,
            got: v0.len().min(v1.len()),
        });
    }
    let lap = spectral_radius(n, |x: &[T]| e.apply(&e.t_apply(x)));
    let vmax = v1.iter().fold(T::zero(), |a, &b| a.max(b));
    let lip = vmax * lap * T::lit(1.01);
    let step = if lip > T::zero() { T::one() / lip } else { T::one() };
    let potentials = |mu: &[T]| -> Vec<T> {
        let emu = e.apply(mu);
        (0..n).map(|i| v0[i] - v1[i] * emu[i]).collect()
    };

    let one = T::one();
    let mut mu = vec![T::zero(); m];
    let mut y = potentials(&mu);
    let mut residual = T::infinity();
    for it in 0..MAX_ITER {
        let grad = e.t_apply(&y);
        // projected gradient map with unit step, used as the stationarity measure
        residual = mu
            .iter()
            .zip(&grad)
            .fold(T::zero(), |r, (&a, &g)| r.max(((a + g).max(-one).min(one) - a).abs()));
        if residual <= T::tol(GRAD_TOL) {
            return Ok(SaddleSolution {
                y,
                mu,
                iterations: it,
                residual,
            });
        }
        for (a, &g) in mu.iter_mut().zip(&grad) {
            *a = (*a + step * g).max(-one).min(one);
        }
        y = potentials(&mu);
        if !(max_abs(&y).is_finite()) {
            break;
        }
    }
    Err(OptimizerError::IterationLimit {
        cap: MAX_ITER,
        residual: residual.as_f64(),
    })
}
