//! Least-norm flow inside interval constraints on `μ` and on `u = -Eμ`.

use crate::graph::IncidenceMatrix;
use crate::linalg::{Cholesky, DenseMatrix};
use crate::relations::Interval;
use crate::scalar::{max_abs, Scalar};

const QP_TOL: f64 = 1e-13;
const QP_MAX_ITER: usize = 50_000;
const QP_SIGMA: f64 = 1e-6;
const QP_RELAX: f64 = 1.6;

/// `argmin ½‖μ‖²` subject to `μ_k ∈ flow_sets[k]` and `-(Eμ)ᵢ ∈ divergence_sets[i]`.
///
/// Operator splitting on the stacked constraint `[I; -E] μ ∈ box`, warm-started
/// at `warm`. Returns the last iterate if the tolerance is not met.
pub(crate) fn least_norm_flow<T: Scalar>(
    e: &IncidenceMatrix,
    flow_sets: &[Interval<T>],
    divergence_sets: &[Interval<T>],
    warm: &[T],
) -> Vec<T> {
    let (n, m) = (e.node_count(), e.edge_count());
    if m == 0 {
        return Vec::new();
    }
    let lo: Vec<T> = flow_sets.iter().chain(divergence_sets).map(|s| s.lo).collect();
    let hi: Vec<T> = flow_sets.iter().chain(divergence_sets).map(|s| s.hi).collect();
    let apply_a = |mu: &[T]| -> Vec<T> {
        let mut out = mu.to_vec();
        out.extend(e.apply(mu).into_iter().map(|v| -v));
        out
    };
    // Aᵀv = v_μ - Eᵀ v_u
    let apply_at = |v: &[T]| -> Vec<T> {
        let et = e.t_apply(&v[m..]);
        v[..m].iter().zip(et).map(|(&a, b)| a - b).collect()
    };

    let rho = T::one();
    let sigma = T::lit(QP_SIGMA);
    let alpha = T::lit(QP_RELAX);
    // (1 + σ)I + ρ(I + EᵀE)
    let mut kmat = DenseMatrix::<T>::identity(m);
    for k in 0..m {
        kmat[(k, k)] = T::one() + sigma + rho;
    }
    for i in 0..n {
        let row: Vec<(usize, T)> = (0..m)
            .filter(|&k| e.entry(i, k) != 0)
            .map(|k| (k, T::from_i8(e.entry(i, k)).expect("±1")))
            .collect();
        for &(a, va) in &row {
            for &(b, vb) in &row {
                kmat[(a, b)] += rho * va * vb;
            }
        }
    }
    let chol = Cholesky::factor(&kmat).expect("regularized normal matrix is positive definite");

    let clamp = |v: Vec<T>| -> Vec<T> {
        v.into_iter()
            .zip(lo.iter().zip(&hi))
            .map(|(x, (&l, &h))| x.max(l).min(h))
            .collect()
    };
    let mut mu = warm.to_vec();
    let mut z = clamp(apply_a(&mu));
    let mut lambda = vec![T::zero(); m + n];
    for _ in 0..QP_MAX_ITER {
        let mut rz: Vec<T> = z.iter().zip(&lambda).map(|(&zi, &li)| rho * zi - li).collect();
        rz = apply_at(&rz);
        let rhs: Vec<T> = mu.iter().zip(&rz).map(|(&a, &b)| sigma * a + b).collect();
        let mt = chol.solve(&rhs);
        let zt = apply_a(&mt);
        let mu_next: Vec<T> = mt
            .iter()
            .zip(&mu)
            .map(|(&a, &b)| alpha * a + (T::one() - alpha) * b)
            .collect();
        let zhat: Vec<T> = zt
            .iter()
            .zip(&z)
            .map(|(&a, &b)| alpha * a + (T::one() - alpha) * b)
            .collect();
        let z_next = clamp(zhat.iter().zip(&lambda).map(|(&a, &l)| a + l / rho).collect());
        for ((l, &a), &b) in lambda.iter_mut().zip(&zhat).zip(&z_next) {
            *l += rho * (a - b);
        }
        mu = mu_next;
        z = z_next;

        let az = apply_a(&mu);
        let primal = az.iter().zip(&z).fold(T::zero(), |r, (&a, &b)| r.max((a - b).abs()));
        let atl = apply_at(&lambda);
        let dual = mu.iter().zip(&atl).fold(T::zero(), |r, (&a, &b)| r.max((a + b).abs()));
        let scale = T::one() + max_abs(&mu).max(max_abs(&lambda));
        if primal <= T::tol(QP_TOL) * scale && dual <= T::tol(QP_TOL) * scale {
            break;
        }
    }
    // the flow box is simple, so land exactly inside it
    mu.iter().zip(flow_sets).map(|(&x, s)| s.project(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn free_flows_on_a_triangle_drop_the_circulation() {
        let g = Graph::new(3, vec![(1, 2), (2, 3), (3, 1)]).unwrap();
        let e = g.incidence();
        let any = vec![Interval::real_line(); 3];
        // u = (1, 0, -1) fixed; warm start carries a unit circulation
        let u = [1.0, 0.0, -1.0];
        let div: Vec<_> = u.iter().map(|&x| Interval::point(x)).collect();
        let warm = [-1.0 + 1.0, 1.0, 1.0];
        let mu = least_norm_flow(&e, &any, &div, &warm);
        let got: Vec<f64> = e.apply(&mu).into_iter().map(|v| -v).collect();
        for (a, b) in got.iter().zip(u) {
            assert!((a - b).abs() < 1e-9, "{got:?}");
        }
        let mean = mu.iter().sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-9, "{mu:?}");
    }
}
