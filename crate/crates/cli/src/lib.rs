//! Command implementations behind the `passive-nets` binary.
//!
//! Every command reads a scenario (or traffic parameters), writes its outputs
//! into a directory and returns a [`CliError`] whose [`CliError::exit_code`]
//! the binary reports.

pub mod scenario;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use passive_nets::optimizer::{self, NetworkProgram, OptimizerError, ProgramMode, SolutionReport, VerifyReport};
use passive_nets::simulator::{detect_steady_state, simulate, NetworkModel, SimError, SteadyState, Trajectory};
use passive_nets::traffic::{run_traffic, ClusterSummary, TrafficConfig, RNG_NAME};

pub use scenario::Scenario;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {detail}")]
    Input { path: PathBuf, detail: String },
    #[error("invalid scenario at `{field}`: {detail}")]
    Schema { field: String, detail: String },
    #[error("cannot write {path}: {detail}")]
    Output { path: PathBuf, detail: String },
    #[error("simulation failed: {0}")]
    Simulation(#[from] SimError),
    #[error("trajectory did not settle within horizon {horizon}")]
    NotSettled { horizon: f64 },
    #[error("solver: {0}")]
    Solver(#[from] OptimizerError),
    #[error("inverse optimality check failed: {}", failed.join(", "))]
    VerifyFailed { failed: Vec<String> },
    #[error(transparent)]
    Library(#[from] passive_nets::Error),
}

impl CliError {
    /// 0 success, 1 input or schema, 2 horizon exhausted or diverged,
    /// 3 solver refused or infeasible, 4 verification failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input { .. } | Self::Schema { .. } | Self::Output { .. } => 1,
            Self::Simulation(SimError::Diverged { .. }) | Self::NotSettled { .. } => 2,
            Self::Simulation(_) => 1,
            Self::Solver(OptimizerError::CountMismatch { .. } | OptimizerError::WrongMode(_)) => 1,
            Self::Solver(_) => 3,
            Self::VerifyFailed { .. } => 4,
            Self::Library(e) => match e {
                passive_nets::Error::Simulation(s) => Self::Simulation(s.clone()).exit_code(),
                passive_nets::Error::Optimizer(o) => Self::Solver(o.clone()).exit_code(),
                passive_nets::Error::NotSettled { .. } => 2,
                _ => 1,
            },
        }
    }
}

/// Output metadata attached to every JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub versions: Versions,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng: Option<&'static str>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub passive_nets: &'static str,
    pub cli: &'static str,
}

impl Meta {
    fn new(seed: Option<u64>, dt: Option<f64>) -> Self {
        Self {
            seed,
            dt,
            versions: Versions {
                passive_nets: passive_nets::VERSION,
                cli: env!("CARGO_PKG_VERSION"),
            },
            rng: None,
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| output_error(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| output_error(path, e))
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| output_error(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| output_error(path, e))
}

/// Full-precision scientific notation (17 significant digits).
fn fmt_f64(x: f64) -> String {
    // adding 0.0 turns -0 into 0
    format!("{:.16e}", x + 0.0)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory<f64>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(traj.csv_header()).map_err(|e| output_error(path, e))?;
    for s in 0..traj.len() {
        w.write_record(traj.csv_row(s).into_iter().map(fmt_f64))
            .map_err(|e| output_error(path, e))?;
    }
    w.flush().map_err(|e| output_error(path, e))
}

/// Output of [`run_simulate`].
pub struct SimulateOutcome {
    pub model: NetworkModel<f64>,
    pub trajectory: Trajectory<f64>,
    pub steady: Option<SteadyState<f64>>,
}

#[derive(Serialize)]
struct SteadyDoc<'a> {
    meta: Meta,
    settled: bool,
    steady_state: Option<&'a SteadyState<f64>>,
}

fn simulate_scenario(s: &Scenario) -> Result<SimulateOutcome, CliError> {
    let model = s.model()?;
    let (x0, eta0) = s.initial_state(&model);
    log::info!(
        "simulating {} nodes, {} edges, dt {}, horizon {}",
        model.graph().node_count(),
        model.graph().edge_count(),
        s.simulation.dt,
        s.simulation.horizon
    );
    let trajectory = simulate(&model, &x0, &eta0, &s.sim_options())?;
    let sim = &s.simulation;
    let steady = detect_steady_state(&model, &trajectory, sim.window, sim.steady_tol, sim.agreement_tol);
    match &steady {
        Some(st) => log::info!("settled: y = {:?}, beta = {:?}", st.y, st.beta),
        None => log::warn!("not settled within the horizon"),
    }
    Ok(SimulateOutcome {
        model,
        trajectory,
        steady,
    })
}

/// `simulate`: writes `trajectory.csv` and `steady_state.json`.
pub fn run_simulate(s: &Scenario, out: &Path) -> Result<SimulateOutcome, CliError> {
    let outcome = simulate_scenario(s)?;
    write_trajectory(&out.join("trajectory.csv"), &outcome.trajectory)?;
    write_json(
        &out.join("steady_state.json"),
        &SteadyDoc {
            meta: Meta::new(s.simulation.seed, Some(s.simulation.dt)),
            settled: outcome.steady.is_some(),
            steady_state: outcome.steady.as_ref(),
        },
    )?;
    if outcome.steady.is_none() {
        return Err(CliError::NotSettled {
            horizon: s.simulation.horizon,
        });
    }
    Ok(outcome)
}

/// Mode from the command line, else the scenario, else `gofp`.
pub fn resolve_mode(s: &Scenario, cli: Option<ProgramMode>) -> ProgramMode {
    cli.or(s.solver.mode).unwrap_or(ProgramMode::Gofp)
}

/// The program of `mode` for a scenario, honoring relation overrides.
pub fn build_program(
    s: &Scenario,
    model: &NetworkModel<f64>,
    mode: ProgramMode,
) -> Result<NetworkProgram<f64>, CliError> {
    let graph = model.graph().clone();
    let nodes = s
        .solver
        .node_relations
        .clone()
        .unwrap_or_else(|| model.node_relations().to_vec());
    let prog = match mode {
        ProgramMode::Ofp1 => NetworkProgram::ofp1(graph, nodes)?,
        ProgramMode::Gofp => {
            let edges = s
                .solver
                .edge_relations
                .clone()
                .unwrap_or_else(|| model.edge_relations());
            NetworkProgram::gofp(graph, nodes, edges)?
        }
        ProgramMode::Opp2 => {
            let u = s.solver.divergence.clone().ok_or_else(|| CliError::Schema {
                field: "solver.divergence".into(),
                detail: "required in opp2 mode".into(),
            })?;
            let couplings = match &s.solver.edge_relations {
                Some(e) => e.clone(),
                None => {
                    let mut c = Vec::new();
                    for (k, ctrl) in model.controllers().iter().enumerate() {
                        c.push(ctrl.coupling().ok_or_else(|| CliError::Schema {
                            field: format!("edges[{k}]"),
                            detail: "opp2 needs controllers of the form η̇ = ζ, μ = ψ(η)".into(),
                        })?);
                    }
                    c
                }
            };
            NetworkProgram::opp2(graph, couplings, u)?
        }
    };
    Ok(prog)
}

#[derive(Serialize)]
struct SolutionDoc<'a> {
    meta: Meta,
    solution: &'a SolutionReport<f64>,
}

/// `solve`: writes `solution.json`.
pub fn run_solve(s: &Scenario, mode: ProgramMode, out: &Path) -> Result<SolutionReport<f64>, CliError> {
    let model = s.model()?;
    let prog = build_program(s, &model, mode)?;
    let report = optimizer::solve(&prog)?;
    log::info!(
        "{mode:?}: potential {:e}, flow {:e}, gap {:e}, kkt {:e}",
        report.value_potential,
        report.value_flow,
        report.gap,
        report.kkt_residual
    );
    write_json(
        &out.join("solution.json"),
        &SolutionDoc {
            meta: Meta::new(s.simulation.seed, None),
            solution: &report,
        },
    )?;
    Ok(report)
}

#[derive(Serialize)]
struct VerifyDoc<'a> {
    meta: Meta,
    mode: ProgramMode,
    steady_state: &'a SteadyState<f64>,
    solution: &'a SolutionReport<f64>,
    verify: &'a VerifyReport,
}

/// `verify`: simulates, solves, compares; writes `trajectory.csv` and `verify.json`.
pub fn run_verify(s: &Scenario, mode: ProgramMode, out: &Path) -> Result<VerifyReport, CliError> {
    let sim = simulate_scenario(s)?;
    write_trajectory(&out.join("trajectory.csv"), &sim.trajectory)?;
    let steady = sim.steady.ok_or(CliError::NotSettled {
        horizon: s.simulation.horizon,
    })?;
    let prog = build_program(s, &sim.model, mode)?;
    let report = optimizer::solve(&prog)?;
    let verdict = optimizer::verify_inverse_optimality(&steady, &prog, &report)?;
    for c in &verdict.checks {
        log::info!(
            "{:<28} {:.3e} (tol {:.1e}) {}",
            c.name,
            c.value,
            c.tolerance,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    write_json(
        &out.join("verify.json"),
        &VerifyDoc {
            meta: Meta::new(s.simulation.seed, Some(s.simulation.dt)),
            mode,
            steady_state: &steady,
            solution: &report,
            verify: &verdict,
        },
    )?;
    if !verdict.passed {
        return Err(CliError::VerifyFailed {
            failed: verdict.failed().map(|c| c.name.to_string()).collect(),
        });
    }
    Ok(verdict)
}

#[derive(Serialize)]
struct ClustersDoc<'a> {
    meta: Meta,
    n: usize,
    sigma0: f64,
    sigma1: f64,
    kappa: f64,
    v0: &'a [f64],
    v1: &'a [f64],
    steady_state: &'a SteadyState<f64>,
    summary: &'a ClusterSummary,
    saddle_y: &'a [f64],
    saddle_mu: &'a [f64],
    saddle_deviation: f64,
}

/// `traffic-demo`: writes `trajectory.csv`, `clusters.json` and `velocities.csv`.
pub fn run_traffic_demo(cfg: &TrafficConfig, out: &Path) -> Result<ClusterSummary, CliError> {
    log::info!(
        "traffic demo: n {}, sigma0 {}, sigma1 {}, seed {}",
        cfg.n,
        cfg.sigma0,
        cfg.sigma1,
        cfg.seed
    );
    let run = run_traffic(cfg)?;
    write_trajectory(&out.join("trajectory.csv"), &run.trajectory)?;
    let mut meta = Meta::new(Some(cfg.seed), Some(cfg.dt));
    meta.rng = Some(RNG_NAME);
    write_json(
        &out.join("clusters.json"),
        &ClustersDoc {
            meta,
            n: cfg.n,
            sigma0: cfg.sigma0,
            sigma1: cfg.sigma1,
            kappa: cfg.kappa,
            v0: &run.v0,
            v1: &run.v1,
            steady_state: &run.steady,
            summary: &run.summary,
            saddle_y: &run.saddle_y,
            saddle_mu: &run.saddle_mu,
            saddle_deviation: run.saddle_deviation,
        },
    )?;

    let path = out.join("velocities.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["rank", "node", "velocity", "cluster"])
        .map_err(|e| output_error(&path, e))?;
    let summary = &run.summary;
    let cluster_of = |node: usize| {
        summary
            .clusters
            .iter()
            .position(|c| c.nodes.contains(&node))
            .unwrap_or(0)
            + 1
    };
    let mut order: Vec<usize> = (0..summary.velocities.len()).collect();
    order.sort_by(|&a, &b| summary.velocities[a].total_cmp(&summary.velocities[b]));
    for (rank, &i) in order.iter().enumerate() {
        w.write_record([
            (rank + 1).to_string(),
            (i + 1).to_string(),
            fmt_f64(summary.velocities[i]),
            cluster_of(i + 1).to_string(),
        ])
        .map_err(|e| output_error(&path, e))?;
    }
    w.flush().map_err(|e| output_error(&path, e))?;
    log::info!(
        "{} cluster(s), saturated edges {:?}, saddle deviation {:.3e}",
        summary.clusters.len(),
        summary.saturated_edges,
        run.saddle_deviation
    );
    Ok(run.summary)
}
