use serde::{Deserialize, Serialize};

use super::{NetworkProgram, OptimizerError, ProgramMode};
use crate::scalar::{dot, Scalar};

/// One axis of an exhaustive search grid, `lo, lo + step, …, ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridAxis {
    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self { lo, hi, step }
    }

    fn count(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    fn at(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    /// Minimizing potential, expanded to one entry per node.
    pub point: Vec<T>,
    pub value: T,
    pub evaluations: usize,
}

/// Minimizes the potential objective by exhaustive grid search.
///
/// Free variables: the potentials `y` in `gofp` mode, the common value `β` of
/// `y = β𝟙` in `ofp1` mode, and `v` in `opp2` mode. At most three are allowed
/// and `axes` must supply one axis per free variable.
pub fn brute_force_oracle<T: Scalar>(
    prog: &NetworkProgram<T>,
    axes: &[GridAxis],
) -> Result<OracleResult<T>, OptimizerError> {
    let n = prog.graph().node_count();
    let free = match prog.mode() {
        ProgramMode::Ofp1 => 1,
        ProgramMode::Gofp | ProgramMode::Opp2 => n,
    };
    if free > 3 {
        return Err(OptimizerError::TooManyVariables { count: free });
    }
    if axes.len() != free {
        return Err(OptimizerError::CountMismatch {
            what: "grid axes",
            expected: free,
            got: axes.len(),
        });
    }
    let expand = |p: &[T]| -> Vec<T> {
        match prog.mode() {
            ProgramMode::Ofp1 => vec![p[0]; n],
            _ => p.to_vec(),
        }
    };
    let objective = |y: &[T]| -> T {
        match prog.mode() {
            ProgramMode::Opp2 => {
                let eta = prog.incidence().t_apply(y);
                let p = prog
                    .edge_costs()
                    .iter()
                    .zip(&eta)
                    .fold(T::zero(), |a, (c, &x)| a + c.value(x));
                p + dot(prog.divergence().expect("opp2 has a divergence"), y)
            }
            ProgramMode::Ofp1 => prog
                .node_costs()
                .iter()
                .zip(y)
                .fold(T::zero(), |a, (k, &x)| a + k.conjugate(x)),
            ProgramMode::Gofp => prog.potential_objective(y),
        }
    };

    let counts: Vec<usize> = axes.iter().map(GridAxis::count).collect();
    let total: usize = counts.iter().product();
    let mut best: Option<(Vec<T>, T)> = None;
    let mut idx = vec![0usize; free];
    let mut p = vec![T::zero(); free];
    for _ in 0..total {
        for (d, a) in axes.iter().enumerate() {
            p[d] = T::lit(a.at(idx[d]));
        }
        let y = expand(&p);
        let val = objective(&y);
        if best.as_ref().is_none_or(|b| val < b.1) {
            best = Some((y, val));
        }
        for d in (0..free).rev() {
            idx[d] += 1;
            if idx[d] < counts[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    let (point, value) = best.unwrap_or((vec![T::zero(); n], T::infinity()));
    Ok(OracleResult {
        point,
        value,
        evaluations: total,
    })
}
