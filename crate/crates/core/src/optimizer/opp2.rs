use super::{NetworkProgram, OptimizerError, ProgramMode, SolutionReport};
use crate::linalg::Cholesky;
use crate::relations::MonotoneRelation;
use crate::scalar::{dot, max_abs, Scalar};

const GRAD_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 200;

/// Solves `min_v Σ P_k((Eᵀv)_k) + uᵀv` and its dual `min Σ P*_k(μ_k)` s.t. `u + Eμ = 0`.
///
/// Requires every coupling `ψ_k = ∂P_k` to be a strongly monotone function on
/// the whole line; otherwise the problem is refused and the edges whose
/// least-norm required flow leaves the open range of `ψ_k` are named (1-based).
pub fn solve_opp2<T: Scalar>(prog: &NetworkProgram<T>) -> Result<SolutionReport<T>, OptimizerError> {
    let u = prog.divergence().ok_or(OptimizerError::WrongMode(prog.mode()))?;
    let e = prog.incidence();
    let (n, m) = (e.node_count(), e.edge_count());
    let psi: Vec<&MonotoneRelation<T>> = prog.edge_costs().iter().map(|p| p.relation()).collect();

    let not_strong: Vec<usize> = psi
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            let d = r.domain();
            !(r.is_single_valued()
                && d.lo == T::neg_infinity()
                && d.hi == T::infinity()
                && r.strong_monotonicity_modulus() > T::zero())
        })
        .map(|(k, _)| k + 1)
        .collect();
    if !not_strong.is_empty() {
        let chol = Cholesky::factor(&e.grounded_laplacian(&vec![T::one(); m])).expect("connected graph");
        let phi = chol.solve(&u.iter().map(|&x| -x).collect::<Vec<_>>());
        let required = e.t_apply(&phi);
        let saturating = psi
            .iter()
            .zip(&required)
            .enumerate()
            .filter(|(_, (r, &mu))| {
                let range = r.range();
                !(range.lo < mu && mu < range.hi)
            })
            .map(|(k, _)| k + 1)
            .collect();
        return Err(OptimizerError::NotStronglyConvex { not_strong, saturating });
    }

    let psi_at = |r: &MonotoneRelation<T>, x: T| r.eval_set(x).expect("full domain").lo;
    let objective = |v: &[T]| -> T {
        let eta = e.t_apply(v);
        let p = prog
            .edge_costs()
            .iter()
            .zip(&eta)
            .fold(T::zero(), |a, (c, &x)| a + c.value(x));
        p + dot(u, v)
    };
    let gradient = |v: &[T]| -> Vec<T> {
        let eta = e.t_apply(v);
        let mu: Vec<T> = psi.iter().zip(&eta).map(|(r, &x)| psi_at(r, x)).collect();
        e.apply(&mu).iter().zip(u).map(|(&a, &b)| a + b).collect()
    };

    // damped (semismooth) Newton; piecewise-linear couplings use the one-sided slope
    let mut v = vec![T::zero(); n];
    let mut g = gradient(&v);
    let mut iterations = 0;
    let tol = T::tol(GRAD_TOL);
    while max_abs(&g) > tol * (T::one() + max_abs(u)) && iterations < MAX_NEWTON {
        iterations += 1;
        let eta = e.t_apply(&v);
        let slopes: Vec<T> = psi
            .iter()
            .zip(&eta)
            .map(|(r, &x)| {
                let h = T::lit(1e-7) * (T::one() + x.abs());
                ((psi_at(r, x + h) - psi_at(r, x)) / h).max(r.strong_monotonicity_modulus())
            })
            .collect();
        let hess = Cholesky::factor(&e.grounded_laplacian(&slopes)).expect("positive weights");
        let step = hess.solve(&g);
        let f0 = objective(&v);
        let slope0 = dot(&g, &step);
        let mut t = T::one();
        let mut next: Vec<T>;
        loop {
            next = v.iter().zip(&step).map(|(&a, &s)| a - t * s).collect();
            if objective(&next) <= f0 - T::lit(1e-4) * t * slope0 || t < T::lit(1e-12) {
                break;
            }
            t *= T::lit(0.5);
        }
        v = next;
        g = gradient(&v);
    }
    let converged = max_abs(&g) <= tol * (T::one() + max_abs(u));
    let mean = v.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(n);
    v.iter_mut().for_each(|x| *x -= mean);

    let eta = e.t_apply(&v);
    let mu: Vec<T> = psi.iter().zip(&eta).map(|(r, &x)| psi_at(r, x)).collect();
    let p_sum = prog
        .edge_costs()
        .iter()
        .zip(&eta)
        .fold(T::zero(), |a, (c, &x)| a + c.value(x));
    let p_star = prog
        .edge_costs()
        .iter()
        .zip(&mu)
        .fold(T::zero(), |a, (c, &x)| a + c.conjugate(x));
    let kkt = e
        .apply(&mu)
        .iter()
        .zip(u)
        .fold(T::zero(), |r, (&a, &b)| r.max((a + b).abs()));
    Ok(SolutionReport {
        mode: ProgramMode::Opp2,
        y: Vec::new(),
        u: u.to_vec(),
        zeta: Vec::new(),
        value_flow: p_star,
        value_potential: p_sum + dot(u, &v),
        gap: p_star + p_sum - dot(&mu, &eta),
        kkt_residual: kkt,
        mu,
        v: Some(v),
        eta: Some(eta),
        unique: true,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::super::solve;
    use super::*;
    use crate::graph::Graph;
    use crate::relations::{PiecewiseLinear, Tail};

    type R = MonotoneRelation<f64>;

    #[test]
    fn single_edge_quadratic() {
        let prog = NetworkProgram::opp2(
            Graph::path(2).unwrap(),
            vec![R::affine(1.0, 0.0).unwrap()],
            vec![1.0, -1.0],
        )
        .unwrap();
        let rep = solve(&prog).unwrap();
        let v = rep.v.as_ref().unwrap();
        assert!((v[0] + 0.5).abs() < 1e-12 && (v[1] - 0.5).abs() < 1e-12, "{v:?}");
        assert!((rep.eta.as_ref().unwrap()[0] + 1.0).abs() < 1e-12);
        assert!((rep.mu[0] + 1.0).abs() < 1e-12);
        assert!(rep.gap.abs() < 1e-12);
        assert!((rep.value_flow - 0.5).abs() < 1e-12);
        assert!((rep.value_potential + 0.5).abs() < 1e-12);
    }

    #[test]
    fn piecewise_coupling_converges() {
        let p = PiecewiseLinear::new(vec![(0.0, 0.0), (1.0, 0.5)], Tail::Slope(2.0), Tail::Slope(3.0)).unwrap();
        let g = Graph::path(3).unwrap();
        let prog = NetworkProgram::opp2(
            g,
            vec![R::PiecewiseLinear(p.clone()), R::PiecewiseLinear(p)],
            vec![-2.0, 0.5, 1.5],
        )
        .unwrap();
        let rep = solve(&prog).unwrap();
        assert!(rep.converged && rep.kkt_residual < 1e-9, "{rep:?}");
        assert!(rep.gap.abs() < 1e-9);
    }

    #[test]
    fn saturating_coupling_is_refused() {
        let prog = NetworkProgram::opp2(Graph::path(2).unwrap(), vec![R::tanh(1.0).unwrap()], vec![2.0, -2.0]).unwrap();
        match solve(&prog) {
            Err(OptimizerError::NotStronglyConvex { not_strong, saturating }) => {
                assert_eq!(not_strong, vec![1]);
                assert_eq!(saturating, vec![1]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbalanced_divergence_rejected() {
        let err = NetworkProgram::opp2(
            Graph::path(2).unwrap(),
            vec![R::affine(1.0, 0.0).unwrap()],
            vec![1.0, 0.0],
        );
        assert!(matches!(err, Err(OptimizerError::UnbalancedDivergence { .. })));
    }
}
