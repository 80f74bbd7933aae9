use super::selection::least_norm_flow;
use super::{NetworkProgram, OptimizerError, ProgramMode, SolutionReport};
use crate::linalg::{Cholesky, DenseMatrix};
use crate::relations::Interval;
use crate::scalar::{max_abs, Scalar};

/// Settings of the splitting method for the potential problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplittingOptions {
    /// Initial augmented-Lagrangian penalty.
    pub penalty: f64,
    /// Stop when primal and dual residuals fall below this, relative to `1 + scale`.
    pub tol: f64,
    pub max_iter: usize,
    /// Iterates beyond this magnitude are taken as evidence of infeasibility.
    pub divergence_bound: f64,
}

impl Default for SplittingOptions {
    fn default() -> Self {
        Self {
            penalty: 1.0,
            tol: 1e-11,
            max_iter: 200_000,
            divergence_bound: 1e12,
        }
    }
}

/// Raw output of [`solve_gopp`]: potentials plus the multipliers of `ζ = Eᵀy`.
#[derive(Debug, Clone, PartialEq)]
pub struct GoppSolution<T> {
    pub y: Vec<T>,
    pub zeta: Vec<T>,
    pub u: Vec<T>,
    pub mu: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: T,
    pub dual_residual: T,
}

const BALANCE_EVERY: usize = 100;
const PENALTY_RANGE: (f64, f64) = (1e-6, 1e6);
// stalled primal residual above this (relative) after the grace period means infeasible
const STALL_FLOOR: f64 = 1e-4;
const STALL_GRACE: usize = 5_000;
const STALL_WINDOW: usize = 2_000;

/// Minimizes `Σ K*ᵢ(yᵢ) + Σ Γ_k(ζ_k)` subject to `ζ = Eᵀy`.
///
/// The splitting alternates the separable proximal step on `(y, ζ)` with the
/// projection onto `{ζ = Eᵀy}`; the scaled multipliers give `u = -Eμ` exactly.
pub fn solve_gopp<T: Scalar>(
    prog: &NetworkProgram<T>,
    opts: &SplittingOptions,
) -> Result<GoppSolution<T>, OptimizerError> {
    if prog.mode() == ProgramMode::Opp2 {
        return Err(OptimizerError::WrongMode(prog.mode()));
    }
    let e = prog.incidence();
    let (n, m) = (e.node_count(), e.edge_count());
    let mut proj = DenseMatrix::<T>::identity(n);
    for k in 0..m {
        let (i, j) = e.ends(k);
        proj[(i, i)] += T::one();
        proj[(j, j)] += T::one();
        proj[(i, j)] -= T::one();
        proj[(j, i)] -= T::one();
    }
    let chol = Cholesky::factor(&proj).expect("I + EEᵀ is positive definite");

    let mut rho = T::lit(opts.penalty);
    let tol = T::lit(opts.tol);
    let bound = T::lit(opts.divergence_bound);
    let (rho_lo, rho_hi) = (T::lit(PENALTY_RANGE.0), T::lit(PENALTY_RANGE.1));

    let mut zy = vec![T::zero(); n];
    let mut zz = vec![T::zero(); m];
    let mut wy = vec![T::zero(); n];
    let mut wz = vec![T::zero(); m];
    let mut xy = vec![T::zero(); n];
    let mut xz = vec![T::zero(); m];
    let mut rhs = vec![T::zero(); n];
    let (mut r, mut s) = (T::infinity(), T::infinity());
    let mut history: Vec<T> = Vec::new();
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iter {
        it += 1;
        let t = T::one() / rho;
        for (i, k) in prog.node_costs().iter().enumerate() {
            xy[i] = k.conjugate_prox(zy[i] - wy[i], t);
        }
        for (k, g) in prog.edge_costs().iter().enumerate() {
            xz[k] = g.prox(zz[k] - wz[k], t);
        }
        // projection of (xy + wy, xz + wz) onto ζ = Eᵀy
        for i in 0..n {
            rhs[i] = xy[i] + wy[i];
        }
        for k in 0..m {
            let (i, j) = e.ends(k);
            let b = xz[k] + wz[k];
            rhs[i] += b;
            rhs[j] -= b;
        }
        let ny = chol.solve(&rhs);
        let nz = e.t_apply(&ny);

        r = T::zero();
        s = T::zero();
        for i in 0..n {
            let d = xy[i] - ny[i];
            wy[i] += d;
            r = r.max(d.abs());
            s = s.max((ny[i] - zy[i]).abs());
        }
        for k in 0..m {
            let d = xz[k] - nz[k];
            wz[k] += d;
            r = r.max(d.abs());
            s = s.max((nz[k] - zz[k]).abs());
        }
        s *= rho;
        zy = ny;
        zz = nz;

        let size = max_abs(&zy).max(max_abs(&zz)).max(max_abs(&xy)).max(max_abs(&xz));
        let dual_size = rho * max_abs(&wy).max(max_abs(&wz));
        if !(size.is_finite() && dual_size.is_finite()) || size > bound || dual_size > bound {
            return Err(OptimizerError::Infeasible {
                detail: format!("iterates exceeded {:e} after {it} iterations", opts.divergence_bound),
            });
        }
        if r <= tol * (T::one() + size) && s <= tol * (T::one() + dual_size) {
            converged = true;
            break;
        }
        if it % BALANCE_EVERY == 0 {
            history.push(r / (T::one() + size));
            let ten = T::lit(10.0);
            let two = T::lit(2.0);
            let scale = if r > ten * s && rho < rho_hi {
                two
            } else if s > ten * r && rho > rho_lo {
                T::lit(0.5)
            } else {
                T::one()
            };
            if scale != T::one() {
                rho *= scale;
                wy.iter_mut().chain(wz.iter_mut()).for_each(|w| *w /= scale);
            }
            if it >= STALL_GRACE {
                let back = STALL_WINDOW / BALANCE_EVERY;
                let then = history[history.len() - 1 - back];
                let now = *history.last().expect("nonempty");
                if now > T::lit(STALL_FLOOR) && now > T::lit(0.5) * then {
                    return Err(OptimizerError::Infeasible {
                        detail: format!(
                            "constraint residual stalls at {:.3e}; the output sets admit no tension in the range of Eᵀ",
                            now.as_f64()
                        ),
                    });
                }
            }
        }
    }
    if !converged {
        log::warn!("potential solver stopped at the iteration cap: primal {r:?}, dual {s:?}");
    }
    let u = wy.iter().map(|&w| -rho * w).collect();
    let mu = wz.iter().map(|&w| -rho * w).collect();
    Ok(GoppSolution {
        y: zy,
        zeta: zz,
        u,
        mu,
        iterations: it,
        converged,
        primal_residual: r,
        dual_residual: s,
    })
}

/// Relative width used when reading off subdifferential sets at computed points.
const SELECT_TOL: f64 = 1e-10;
/// Flow selection is rejected when its residual exceeds this.
const SELECTION_FAIL: f64 = 1e-6;

/// Recovers the flow problem solution `(u*, μ*)` from a potential solution.
///
/// Among the flows compatible with the optimality conditions at `y*`, the one
/// of least Euclidean norm is reported, which fixes circulations on cycles and
/// flat pieces of the edge relations.
pub fn recover_gofp<T: Scalar>(
    prog: &NetworkProgram<T>,
    pot: &GoppSolution<T>,
) -> Result<SolutionReport<T>, OptimizerError> {
    let e = prog.incidence();
    let y = pot.y.clone();
    let zeta = e.t_apply(&y);
    let sel = T::lit(SELECT_TOL);

    let flow_sets: Vec<Interval<T>> = prog
        .edge_costs()
        .iter()
        .zip(&zeta)
        .map(|(g, &z)| {
            let d = sel * (T::one() + z.abs());
            let r = g.relation();
            Interval::new(r.extended_eval(z - d).lo, r.extended_eval(z + d).hi)
        })
        .collect();
    let divergence_sets: Vec<Interval<T>> = prog
        .node_costs()
        .iter()
        .zip(&y)
        .map(|(k, &yi)| {
            let d = sel * (T::one() + yi.abs());
            let inv = k.relation().inverse();
            Interval::new(inv.extended_eval(yi - d).lo, inv.extended_eval(yi + d).hi)
        })
        .collect();

    let candidate = least_norm_flow(e, &flow_sets, &divergence_sets, &pot.mu);
    let u_of = |mu: &[T]| -> Vec<T> { e.apply(mu).into_iter().map(|v| -v).collect() };
    let u_sel = u_of(&candidate);
    let r_sel = prog.kkt_residual(&y, &u_sel, &zeta, &candidate);
    let u_raw = u_of(&pot.mu);
    let r_raw = prog.kkt_residual(&y, &u_raw, &zeta, &pot.mu);
    let (u, mu, kkt) = if r_sel <= r_raw.max(T::lit(SELECTION_FAIL * 1e-2)) {
        (u_sel, candidate, r_sel)
    } else {
        log::debug!("least-norm flow residual {r_sel:?} exceeds the raw multiplier's {r_raw:?}");
        (u_raw, pot.mu.clone(), r_raw)
    };
    if pot.converged && !(kkt <= T::lit(SELECTION_FAIL)) {
        return Err(OptimizerError::NoFlowSelection { residual: kkt.as_f64() });
    }

    let value_flow = prog.flow_objective(&u, &mu);
    let value_potential = prog.potential_objective(&y);
    Ok(SolutionReport {
        mode: prog.mode(),
        y,
        u,
        zeta,
        mu,
        v: None,
        eta: None,
        value_flow,
        value_potential,
        gap: value_flow + value_potential,
        kkt_residual: kkt,
        unique: prog.nodes_determine_optimum(),
        iterations: pot.iterations,
        converged: pot.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::super::solve;
    use super::*;
    use crate::graph::Graph;
    use crate::relations::MonotoneRelation;

    type R = MonotoneRelation<f64>;

    #[test]
    fn affine_pair_ofp1() {
        let g = Graph::path(2).unwrap();
        let prog = NetworkProgram::ofp1(g, vec![R::affine(1.0, 1.0).unwrap(), R::affine(1.0, 3.0).unwrap()]).unwrap();
        let rep = solve(&prog).unwrap();
        assert!(rep.converged);
        for (a, b) in rep.y.iter().zip([2.0, 2.0]) {
            assert!((a - b).abs() < 1e-8, "{:?}", rep.y);
        }
        assert!(
            (rep.u[0] - 1.0).abs() < 1e-8 && (rep.u[1] + 1.0).abs() < 1e-8,
            "{:?}",
            rep.u
        );
        assert!((rep.mu[0] + 1.0).abs() < 1e-8);
        assert!((rep.value_potential - 1.0).abs() < 1e-8);
        assert!((rep.value_flow + 1.0).abs() < 1e-8);
        assert!(rep.gap.abs() < 1e-8 && rep.kkt_residual < 1e-8);
        assert!(rep.unique);
    }

    #[test]
    fn traffic_pair_gofp() {
        let g = Graph::path(2).unwrap();
        let nodes = vec![R::affine(10.0, 0.0).unwrap(), R::affine(10.0, 50.0).unwrap()];
        let edges = vec![R::sign_saturation(-1.0, 1.0, 0.0).unwrap()];
        let prog = NetworkProgram::gofp(g, nodes, edges).unwrap();
        let rep = solve(&prog).unwrap();
        assert!(
            (rep.y[0] - 10.0).abs() < 1e-7 && (rep.y[1] - 40.0).abs() < 1e-7,
            "{:?}",
            rep.y
        );
        assert!((rep.mu[0] + 1.0).abs() < 1e-9);
        assert!((rep.zeta[0] + 30.0).abs() < 1e-7);
        assert!((rep.value_potential - 40.0).abs() < 1e-7);
        assert!((rep.value_flow + 40.0).abs() < 1e-7);
    }

    #[test]
    fn cycle_flow_is_least_norm() {
        // on a triangle any circulation can be added; the reported flow has none
        let g = Graph::new(3, vec![(1, 2), (2, 3), (3, 1)]).unwrap();
        let nodes = vec![
            R::affine(1.0, 0.0).unwrap(),
            R::affine(1.0, 3.0).unwrap(),
            R::affine(1.0, 6.0).unwrap(),
        ];
        let prog = NetworkProgram::ofp1(g, nodes).unwrap();
        let rep = solve(&prog).unwrap();
        assert!(rep.kkt_residual < 1e-8);
        let circulation: f64 = rep.mu.iter().sum::<f64>() / 3.0;
        assert!(circulation.abs() < 1e-8, "{:?}", rep.mu);
    }

    #[test]
    fn disjoint_output_sets_are_infeasible() {
        // node outputs confined to [0, 1] and [5, 6] cannot agree
        let sat = |c: f64| R::sign_saturation(c, c + 1.0, 0.0).unwrap();
        let prog = NetworkProgram::ofp1(Graph::path(2).unwrap(), vec![sat(0.0), sat(5.0)]).unwrap();
        assert!(matches!(solve(&prog), Err(OptimizerError::Infeasible { .. })));
    }
}
