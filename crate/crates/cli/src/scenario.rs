//! Declarative scenario documents.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use passive_nets::graph::Graph;
use passive_nets::linalg::DenseMatrix;
use passive_nets::optimizer::ProgramMode;
use passive_nets::relations::{MonotoneRelation, PiecewiseLinear};
use passive_nets::simulator::{
    NetworkModel, SimOptions, DEFAULT_AGREEMENT_TOL, DEFAULT_DT, DEFAULT_HORIZON, DEFAULT_RECORD_STRIDE,
    DEFAULT_STEADY_TOL,
};
use passive_nets::systems::{AffineNode, EdgeController, NodeSystem};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub graph: Graph,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// A node variant and its parameters. Matrices are lists of rows.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NodeSpec {
    Affine {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: Vec<f64>,
        #[serde(default)]
        d: f64,
        p: Vec<f64>,
        #[serde(default)]
        g: f64,
        w: f64,
        #[serde(default)]
        q: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        rho: f64,
    },
    Integrator,
    Scalar {
        f: PiecewiseLinear<f64>,
        #[serde(default)]
        w: f64,
    },
    Traffic {
        kappa: f64,
        v0: f64,
        v1: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EdgeSpec {
    Integrator { psi: MonotoneRelation<f64> },
    Traffic,
    Damped { leak: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub dt: f64,
    pub horizon: f64,
    pub record_stride: usize,
    /// Initial node states, concatenated; zeros when absent.
    pub x0: Option<Vec<f64>>,
    /// Initial controller states; zeros when absent.
    pub eta0: Option<Vec<f64>>,
    pub steady_tol: f64,
    /// Samples averaged for the steady state.
    pub window: usize,
    pub agreement_tol: f64,
    /// Recorded in output metadata; scenarios themselves draw nothing at random.
    pub seed: Option<u64>,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            horizon: DEFAULT_HORIZON,
            record_stride: DEFAULT_RECORD_STRIDE,
            x0: None,
            eta0: None,
            steady_tol: DEFAULT_STEADY_TOL,
            window: 50,
            agreement_tol: DEFAULT_AGREEMENT_TOL,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub mode: Option<ProgramMode>,
    /// Divergence `u` for `opp2`.
    pub divergence: Option<Vec<f64>>,
    /// Replaces the node relations derived from the model.
    pub node_relations: Option<Vec<MonotoneRelation<f64>>>,
    /// Replaces the edge relations derived from the model (couplings in `opp2`).
    pub edge_relations: Option<Vec<MonotoneRelation<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
}

/// Reads and validates a scenario, reporting the JSON path of the first problem.
pub fn load(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Scenario, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        CliError::Schema {
            field,
            detail: format!("{inner} (line {}, column {})", inner.line(), inner.column()),
        }
    })?;
    scenario.check()?;
    Ok(scenario)
}

fn schema(field: impl Into<String>, detail: impl std::fmt::Display) -> CliError {
    CliError::Schema {
        field: field.into(),
        detail: detail.to_string(),
    }
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DenseMatrix<f64>, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(schema(
            field,
            "expected a nonempty square matrix given as a list of rows",
        ));
    }
    Ok(DenseMatrix::from_row_major(n, n, rows.concat()))
}

impl Scenario {
    fn check(&self) -> Result<(), CliError> {
        let (n, m) = (self.graph.node_count(), self.graph.edge_count());
        if self.nodes.len() != n {
            return Err(schema(
                "nodes",
                format!("graph has {n} nodes, {} given", self.nodes.len()),
            ));
        }
        if self.edges.len() != m {
            return Err(schema(
                "edges",
                format!("graph has {m} edges, {} given", self.edges.len()),
            ));
        }
        for (what, rels) in [
            ("solver.node_relations", &self.solver.node_relations),
            ("solver.edge_relations", &self.solver.edge_relations),
        ] {
            for (i, r) in rels.iter().flatten().enumerate() {
                r.validate().map_err(|e| schema(format!("{what}[{i}]"), e))?;
            }
        }
        for (k, e) in self.edges.iter().enumerate() {
            if let EdgeSpec::Integrator { psi } = e {
                psi.validate().map_err(|err| schema(format!("edges[{k}].psi"), err))?;
            }
        }
        Ok(())
    }

    /// Builds the simulated network.
    pub fn model(&self) -> Result<NetworkModel<f64>, CliError> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, spec) in self.nodes.iter().enumerate() {
            let field = format!("nodes[{i}]");
            let node = match spec {
                NodeSpec::Affine {
                    a,
                    b,
                    c,
                    d,
                    p,
                    g,
                    w,
                    q,
                    rho,
                } => {
                    let am = matrix(&format!("{field}.a"), a)?;
                    let mut node = AffineNode::new(am, b.clone(), c.clone(), *d, p.clone(), *g, *w)
                        .map_err(|e| schema(&field, e))?;
                    let qm = match q {
                        Some(q) => matrix(&format!("{field}.q"), q)?,
                        None => DenseMatrix::identity(node.state_dim()),
                    };
                    node = node.with_storage(qm, *rho).map_err(|e| schema(&field, e))?;
                    NodeSystem::Affine(node)
                }
                NodeSpec::Integrator => NodeSystem::Integrator,
                NodeSpec::Scalar { f, w } => {
                    NodeSystem::scalar_nonlinear(f.clone(), *w).map_err(|e| schema(&field, e))?
                }
                NodeSpec::Traffic { kappa, v0, v1 } => {
                    NodeSystem::traffic(*kappa, *v0, *v1).map_err(|e| schema(&field, e))?
                }
            };
            nodes.push(node);
        }
        let mut controllers = Vec::with_capacity(self.edges.len());
        for (k, spec) in self.edges.iter().enumerate() {
            let field = format!("edges[{k}]");
            controllers.push(match spec {
                EdgeSpec::Integrator { psi } => {
                    EdgeController::integrator(psi.clone()).map_err(|e| schema(&field, e))?
                }
                EdgeSpec::Traffic => EdgeController::TrafficCoupling,
                EdgeSpec::Damped { leak } => EdgeController::damped(*leak).map_err(|e| schema(&field, e))?,
            });
        }
        NetworkModel::new(self.graph.clone(), nodes, controllers).map_err(|e| schema("nodes/edges", e))
    }

    pub fn sim_options(&self) -> SimOptions<f64> {
        SimOptions {
            dt: self.simulation.dt,
            horizon: self.simulation.horizon,
            record_stride: self.simulation.record_stride,
        }
    }

    /// Initial state, zero-filled where the scenario gives none.
    pub fn initial_state(&self, model: &NetworkModel<f64>) -> (Vec<f64>, Vec<f64>) {
        let x0 = self
            .simulation
            .x0
            .clone()
            .unwrap_or_else(|| vec![0.0; model.state_dim()]);
        let eta0 = self
            .simulation
            .eta0
            .clone()
            .unwrap_or_else(|| vec![0.0; model.graph().edge_count()]);
        (x0, eta0)
    }

    pub fn output_dir(&self, cli_override: Option<&Path>) -> PathBuf {
        cli_override
            .map(Path::to_path_buf)
            .or_else(|| self.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "graph": {"nodes": 2, "edges": [[1, 2]]},
        "nodes": [{"type": "integrator"}, {"type": "integrator"}],
        "edges": [{"type": "damped", "leak": 1.0}]
    }"#;

    #[test]
    fn minimal_scenario_parses() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.simulation.dt, DEFAULT_DT);
        let m = s.model().unwrap();
        assert_eq!(m.state_dim(), 2);
    }

    #[test]
    fn unknown_node_type_names_its_field() {
        let text = MINIMAL.replace(r#"{"type": "integrator"}, {"#, r#"{"type": "pendulum"}, {"#);
        match parse(&text) {
            Err(CliError::Schema { field, .. }) => assert_eq!(field, "nodes[0].type"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_edge_index_is_a_schema_error() {
        let text = MINIMAL.replace("[[1, 2]]", "[[1, 3]]");
        match parse(&text) {
            Err(CliError::Schema { field, detail }) => {
                assert_eq!(field, "graph");
                assert!(detail.contains("node"), "{detail}");
            }
            other => panic!("{other:?}"),
        }
    }
}
