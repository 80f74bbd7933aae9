use serde::Serialize;

use super::{NetworkProgram, OptimizerError, ProgramMode, SolutionReport, VALUE_SNAP_TOL};
use crate::scalar::{dot, max_abs, max_abs_diff, Scalar};
use crate::simulator::SteadyState;

/// Tolerance of every identity checked by [`verify_inverse_optimality`], relative to `1 + scale`.
pub const VERIFY_TOL: f64 = 1e-6;

/// One named identity between simulated steady state and optimizer output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn check<T: Scalar>(name: &'static str, value: T, scale: T) -> Check {
    let tolerance = VERIFY_TOL * (1.0 + scale.as_f64().abs());
    let value = value.as_f64();
    Check {
        name,
        value,
        tolerance,
        passed: value <= tolerance,
    }
}

/// Compares a steady state `(ū, ȳ, ζ̄, μ̄, η̄)` with a solved program.
///
/// Where the optimum is unique the variables are compared directly; otherwise
/// the steady state must attain the optimal value, which places it in the
/// optimal set together with the relation and interconnection checks.
pub fn verify_inverse_optimality<T: Scalar>(
    steady: &SteadyState<T>,
    prog: &NetworkProgram<T>,
    report: &SolutionReport<T>,
) -> Result<VerifyReport, OptimizerError> {
    let e = prog.incidence();
    let (n, m) = (e.node_count(), e.edge_count());
    for (what, got, expected) in [
        ("steady-state outputs", steady.y.len(), n),
        ("steady-state inputs", steady.u.len(), n),
        ("steady-state tensions", steady.zeta.len(), m),
        ("steady-state flows", steady.mu.len(), m),
        ("solution flows", report.mu.len(), m),
    ] {
        if got != expected {
            return Err(OptimizerError::CountMismatch { what, expected, got });
        }
    }
    let (y, u, zeta, mu) = (&steady.y, &steady.u, &steady.zeta, &steady.mu);
    let mut checks = Vec::new();

    let emu = e.apply(mu);
    let ety = e.t_apply(y);
    let inter = u
        .iter()
        .zip(&emu)
        .map(|(&a, &b)| (a + b).abs())
        .chain(zeta.iter().zip(&ety).map(|(&a, &b)| (a - b).abs()))
        .fold(T::zero(), T::max);
    checks.push(check("interconnection", inter, max_abs(u).max(max_abs(zeta))));

    match prog.mode() {
        ProgramMode::Opp2 => {
            let u_star = prog.divergence().expect("opp2 has a divergence");
            checks.push(check("divergence_matches", max_abs_diff(u, u_star), max_abs(u_star)));
            checks.push(check("flow_matches", max_abs_diff(mu, &report.mu), max_abs(&report.mu)));
            let eta_star = report.eta.as_deref().unwrap_or(&[]);
            if steady.eta.len() == m && eta_star.len() == m {
                checks.push(check(
                    "tension_matches",
                    max_abs_diff(&steady.eta, eta_star),
                    max_abs(eta_star),
                ));
                let snap = |x: T| T::lit(VALUE_SNAP_TOL) * (T::one() + x.abs());
                let gap = prog
                    .edge_costs()
                    .iter()
                    .zip(mu.iter().zip(&steady.eta))
                    .fold(T::zero(), |a, (p, (&f, &x))| {
                        a + p.conjugate_within(f, snap(f)) + p.value(x)
                    })
                    - dot(mu, &steady.eta);
                checks.push(check(
                    "duality_gap_at_steady_state",
                    gap.abs(),
                    dot(mu, &steady.eta).abs(),
                ));
            }
        }
        ProgramMode::Ofp1 | ProgramMode::Gofp => {
            let mut rel = T::zero();
            for (k, (&ui, &yi)) in prog.node_costs().iter().zip(u.iter().zip(y)) {
                rel = rel.max(k.relation().graph_residual(ui, yi));
            }
            for (g, (&z, &f)) in prog.edge_costs().iter().zip(zeta.iter().zip(mu)) {
                rel = rel.max(g.relation().graph_residual(z, f));
            }
            checks.push(check("steady_state_on_relations", rel, max_abs(y).max(max_abs(u))));

            let flow_value = prog.flow_objective(u, mu);
            let potential_value = prog.potential_objective(y);
            if report.unique {
                checks.push(check(
                    "divergence_matches",
                    max_abs_diff(u, &report.u),
                    max_abs(&report.u),
                ));
                checks.push(check(
                    "potential_matches",
                    max_abs_diff(y, &report.y),
                    max_abs(&report.y),
                ));
                checks.push(check(
                    "tension_matches",
                    max_abs_diff(zeta, &report.zeta),
                    max_abs(&report.zeta),
                ));
            } else {
                checks.push(check(
                    "divergence_matches",
                    (flow_value - report.value_flow).abs(),
                    report.value_flow.abs(),
                ));
                checks.push(check(
                    "potential_matches",
                    (potential_value - report.value_potential).abs(),
                    report.value_potential.abs(),
                ));
            }
            // a tree determines μ from u; single-valued edge relations determine it from ζ
            let flow_determined =
                (report.unique && m + 1 == n) || prog.edge_costs().iter().all(|g| g.relation().is_single_valued());
            if flow_determined {
                checks.push(check("flow_matches", max_abs_diff(mu, &report.mu), max_abs(&report.mu)));
            }
            let gap = flow_value + potential_value;
            checks.push(check(
                "duality_gap_at_steady_state",
                if gap.is_nan() { T::infinity() } else { gap.abs() },
                flow_value.abs().max(potential_value.abs()),
            ));
        }
    }
    Ok(VerifyReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
