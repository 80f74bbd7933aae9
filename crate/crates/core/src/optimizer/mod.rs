//! Dual pairs of network flow and potential problems.
//!
//! The potential problem `min Σ K*ᵢ(yᵢ) + Σ Γ_k((Eᵀy)_k)` is solved by operator
//! splitting; the flow problem `min Σ Kᵢ(uᵢ) + Σ Γ*_k(μ_k)` s.t. `u + Eμ = 0` is
//! recovered from the optimality conditions. The coupling-design pair (given
//! divergence `u`, unknown potential `v`) has its own descent solver.

mod agreement;
mod gopp;
mod opp2;
mod oracle;
mod saddle;
mod selection;
mod verify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, IncidenceMatrix};
use crate::relations::{ConvexIntegral, MonotoneRelation};
use crate::scalar::Scalar;
use crate::simulator::NetworkModel;

pub use agreement::agreement_value;
pub use gopp::{recover_gofp, solve_gopp, GoppSolution, SplittingOptions};
pub use opp2::solve_opp2;
pub use oracle::{brute_force_oracle, GridAxis, OracleResult};
pub use saddle::{saddle_point, SaddleSolution};
pub use verify::{verify_inverse_optimality, Check, VerifyReport, VERIFY_TOL};

/// Tolerance used when evaluating indicator-type costs at numerically computed points.
pub const VALUE_SNAP_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("{what}: expected {expected}, got {got}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("divergence must sum to zero, got {sum:e}")]
    UnbalancedDivergence { sum: f64 },
    #[error("mode {0:?} does not apply here")]
    WrongMode(ProgramMode),
    #[error(
        "refused: coupling on edge(s) {not_strong:?} is not strongly monotone, so the potential \
         problem may have no minimizer; the required flow saturates the coupling range on edge(s) {saturating:?}"
    )]
    NotStronglyConvex {
        not_strong: Vec<usize>,
        saturating: Vec<usize>,
    },
    #[error("problem appears infeasible or unbounded: {detail}")]
    Infeasible { detail: String },
    #[error("no flow in the subdifferential product satisfies u + Eμ = 0 (residual {residual:e})")]
    NoFlowSelection { residual: f64 },
    #[error("agreement bracket search exceeded |β| = {limit:e} without a sign change")]
    UnboundedBracket { limit: f64 },
    #[error("oracle supports at most 3 free variables, problem has {count}")]
    TooManyVariables { count: usize },
    #[error("iteration cap {cap} reached (residual {residual:e})")]
    IterationLimit { cap: usize, residual: f64 },
}

/// Which dual pair a [`NetworkProgram`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgramMode {
    /// Edge costs are the indicator of `{0}`: the output-agreement pair.
    Ofp1,
    /// Given divergence, unknown potential; edge costs are the coupling integrals.
    Opp2,
    /// Edge costs are integrals of the controller equilibrium relations.
    Gofp,
}

impl std::str::FromStr for ProgramMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ofp1" => Ok(Self::Ofp1),
            "opp2" => Ok(Self::Opp2),
            "gofp" => Ok(Self::Gofp),
            other => Err(format!("unknown mode {other:?}, expected ofp1, opp2 or gofp")),
        }
    }
}

/// A network optimization instance.
#[derive(Debug, Clone)]
pub struct NetworkProgram<T> {
    mode: ProgramMode,
    graph: Graph,
    incidence: IncidenceMatrix,
    node_costs: Vec<ConvexIntegral<T>>,
    edge_costs: Vec<ConvexIntegral<T>>,
    divergence: Option<Vec<T>>,
}

impl<T: Scalar> NetworkProgram<T> {
    /// Output-agreement pair: `Γ_k` is the indicator of `{0}`.
    pub fn ofp1(graph: Graph, node_relations: Vec<MonotoneRelation<T>>) -> Result<Self, OptimizerError> {
        let m = graph.edge_count();
        let vertical = vec![MonotoneRelation::VerticalAt { at: T::zero() }; m];
        let mut p = Self::gofp(graph, node_relations, vertical)?;
        p.mode = ProgramMode::Ofp1;
        Ok(p)
    }

    /// Generalized pair with node relations `k_y` and edge relations `γ`.
    pub fn gofp(
        graph: Graph,
        node_relations: Vec<MonotoneRelation<T>>,
        edge_relations: Vec<MonotoneRelation<T>>,
    ) -> Result<Self, OptimizerError> {
        check_count("node relations", graph.node_count(), node_relations.len())?;
        check_count("edge relations", graph.edge_count(), edge_relations.len())?;
        Ok(Self {
            mode: ProgramMode::Gofp,
            incidence: graph.incidence(),
            graph,
            node_costs: node_relations.into_iter().map(ConvexIntegral::new).collect(),
            edge_costs: edge_relations.into_iter().map(ConvexIntegral::new).collect(),
            divergence: None,
        })
    }

    /// Coupling-design pair for a given divergence `u` with `𝟙ᵀu = 0`.
    pub fn opp2(graph: Graph, couplings: Vec<MonotoneRelation<T>>, divergence: Vec<T>) -> Result<Self, OptimizerError> {
        check_count("couplings", graph.edge_count(), couplings.len())?;
        check_count("divergence", graph.node_count(), divergence.len())?;
        let sum = divergence.iter().fold(T::zero(), |a, &b| a + b);
        let scale = divergence.iter().fold(T::one(), |a, &b| a + b.abs());
        if sum.abs() > T::tol(1e-9) * scale {
            return Err(OptimizerError::UnbalancedDivergence { sum: sum.as_f64() });
        }
        Ok(Self {
            mode: ProgramMode::Opp2,
            incidence: graph.incidence(),
            graph,
            node_costs: Vec::new(),
            edge_costs: couplings.into_iter().map(ConvexIntegral::new).collect(),
            divergence: Some(divergence),
        })
    }

    /// Builds the program of `mode` from a model's equilibrium relations.
    ///
    /// `Opp2` needs the divergence and uses the controllers' coupling functions.
    pub fn from_model(
        model: &NetworkModel<T>,
        mode: ProgramMode,
        divergence: Option<Vec<T>>,
    ) -> Result<Self, OptimizerError> {
        let graph = model.graph().clone();
        match mode {
            ProgramMode::Ofp1 => Self::ofp1(graph, model.node_relations().to_vec()),
            ProgramMode::Gofp => Self::gofp(graph, model.node_relations().to_vec(), model.edge_relations()),
            ProgramMode::Opp2 => {
                let u = divergence.ok_or(OptimizerError::WrongMode(mode))?;
                let mut couplings = Vec::with_capacity(model.controllers().len());
                for c in model.controllers() {
                    couplings.push(c.coupling().ok_or(OptimizerError::WrongMode(mode))?);
                }
                Self::opp2(graph, couplings, u)
            }
        }
    }

    pub fn mode(&self) -> ProgramMode {
        self.mode
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn incidence(&self) -> &IncidenceMatrix {
        &self.incidence
    }

    /// `Kᵢ`, empty in `Opp2` mode.
    pub fn node_costs(&self) -> &[ConvexIntegral<T>] {
        &self.node_costs
    }

    /// `Γ_k`, or `P_k` in `Opp2` mode.
    pub fn edge_costs(&self) -> &[ConvexIntegral<T>] {
        &self.edge_costs
    }

    pub fn divergence(&self) -> Option<&[T]> {
        self.divergence.as_deref()
    }

    /// `Σ K*ᵢ(yᵢ) + Σ Γ_k((Eᵀy)_k)`, with indicator costs evaluated up to `VALUE_SNAP_TOL`.
    pub fn potential_objective(&self, y: &[T]) -> T {
        let zeta = self.incidence.t_apply(y);
        let snap = |x: T| T::lit(VALUE_SNAP_TOL) * (T::one() + x.abs());
        let nodes = self
            .node_costs
            .iter()
            .zip(y)
            .fold(T::zero(), |a, (k, &yi)| a + k.conjugate_within(yi, snap(yi)));
        self.edge_costs
            .iter()
            .zip(&zeta)
            .fold(nodes, |a, (g, &z)| a + g.value_within(z, snap(z)))
    }

    /// `Σ Kᵢ(uᵢ) + Σ Γ*_k(μ_k)`, with the same snapping as [`Self::potential_objective`].
    pub fn flow_objective(&self, u: &[T], mu: &[T]) -> T {
        let snap = |x: T| T::lit(VALUE_SNAP_TOL) * (T::one() + x.abs());
        let nodes = self
            .node_costs
            .iter()
            .zip(u)
            .fold(T::zero(), |a, (k, &ui)| a + k.value_within(ui, snap(ui)));
        self.edge_costs
            .iter()
            .zip(mu)
            .fold(nodes, |a, (g, &m)| a + g.conjugate_within(m, snap(m)))
    }

    /// Largest distance of `(uᵢ, yᵢ)` from `k_y,i` and of `(ζ_k, μ_k)` from `γ_k`,
    /// together with `‖u + Eμ‖∞` and `‖ζ - Eᵀy‖∞`.
    pub fn kkt_residual(&self, y: &[T], u: &[T], zeta: &[T], mu: &[T]) -> T {
        let mut r = T::zero();
        for (k, (&ui, &yi)) in self.node_costs.iter().zip(u.iter().zip(y)) {
            r = r.max(k.relation().graph_residual(ui, yi));
        }
        for (g, (&z, &m)) in self.edge_costs.iter().zip(zeta.iter().zip(mu)) {
            r = r.max(g.relation().graph_residual(z, m));
        }
        let emu = self.incidence.apply(mu);
        for (&ui, &v) in u.iter().zip(&emu) {
            r = r.max((ui + v).abs());
        }
        let ety = self.incidence.t_apply(y);
        for (&z, &v) in zeta.iter().zip(&ety) {
            r = r.max((z - v).abs());
        }
        r
    }

    /// Strictly convex, differentiable node costs make `(u, y)` unique.
    pub fn nodes_determine_optimum(&self) -> bool {
        self.node_costs
            .iter()
            .all(|k| k.relation().is_single_valued() && k.relation().is_strictly_monotone())
    }
}

fn check_count(what: &'static str, expected: usize, got: usize) -> Result<(), OptimizerError> {
    if expected == got {
        Ok(())
    } else {
        Err(OptimizerError::CountMismatch { what, expected, got })
    }
}

/// Primal and dual solution of one program, with certificates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionReport<T> {
    pub mode: ProgramMode,
    /// Node potentials; empty in `opp2` mode, where the potential is `v`.
    pub y: Vec<T>,
    pub u: Vec<T>,
    /// Edge tensions; empty in `opp2` mode, where the tension is `eta`.
    pub zeta: Vec<T>,
    pub mu: Vec<T>,
    pub v: Option<Vec<T>>,
    pub eta: Option<Vec<T>>,
    pub value_flow: T,
    pub value_potential: T,
    pub gap: T,
    pub kkt_residual: T,
    pub unique: bool,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves a program according to its mode.
pub fn solve<T: Scalar>(prog: &NetworkProgram<T>) -> Result<SolutionReport<T>, OptimizerError> {
    match prog.mode() {
        ProgramMode::Opp2 => solve_opp2(prog),
        ProgramMode::Ofp1 | ProgramMode::Gofp => {
            let pot = solve_gopp(prog, &SplittingOptions::default())?;
            recover_gofp(prog, &pot)
        }
    }
}
