//! Optimal-velocity traffic on a road of `n` cars: seeded instances, clustering
//! of asymptotic velocities and the saddle-point cross-check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::optimizer::saddle_point;
use crate::scalar::{max_abs_diff, Scalar};
use crate::simulator::{detect_steady_state, simulate, NetworkModel, SimOptions, SteadyState, Trajectory};
use crate::systems::{EdgeController, NodeSystem};
use crate::Error;

/// Name of the generator recorded in output metadata.
pub const RNG_NAME: &str = "ChaCha8";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficConfig {
    pub n: usize,
    pub v0_nominal: f64,
    pub v1_nominal: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub kappa: f64,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub record_stride: usize,
    pub window: usize,
    pub steady_tol: f64,
    pub cluster_tol: f64,
    pub sat_tol: f64,
    /// Forced free-flow offsets, replacing the `V⁰` draws.
    pub v0: Option<Vec<f64>>,
    /// Forced sensitivities, replacing the `V¹` draws.
    pub v1: Option<Vec<f64>>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            n: 10,
            v0_nominal: 25.0,
            v1_nominal: 10.0,
            sigma0: 1.0,
            sigma1: 1.0,
            kappa: 0.6,
            seed: 7,
            dt: 1e-2,
            horizon: 1000.0,
            record_stride: 100,
            window: 20,
            steady_tol: 1e-8,
            cluster_tol: 1e-3,
            sat_tol: 1e-6,
            v0: None,
            v1: None,
        }
    }
}

/// Draws `(V⁰, V¹)` from `N(V⁰_nom, σ⁰²)` and `N(V¹_nom, σ¹²)`.
///
/// Redraws allowed for each non-positive `V¹` sample.
pub const MAX_REDRAWS: usize = 1000;

/// All `V⁰` are drawn before all `V¹`; a non-positive `V¹` is redrawn up to
/// [`MAX_REDRAWS`] times. Forced values in the config replace the draws but
/// the generator is advanced identically.
pub fn draw_parameters(cfg: &TrafficConfig) -> Result<(Vec<f64>, Vec<f64>), Error> {
    let bad = |what: &'static str, value: f64| Error::InvalidParameter { what, value };
    if cfg.n < 2 {
        return Err(bad("n", cfg.n as f64));
    }
    if !(cfg.sigma0 >= 0.0 && cfg.sigma0.is_finite()) {
        return Err(bad("sigma0", cfg.sigma0));
    }
    if !(cfg.sigma1 >= 0.0 && cfg.sigma1.is_finite()) {
        return Err(bad("sigma1", cfg.sigma1));
    }
    if !(cfg.v1_nominal > 0.0) {
        return Err(bad("v1_nominal", cfg.v1_nominal));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d0 = Normal::new(cfg.v0_nominal, cfg.sigma0).map_err(|_| bad("sigma0", cfg.sigma0))?;
    let d1 = Normal::new(cfg.v1_nominal, cfg.sigma1).map_err(|_| bad("sigma1", cfg.sigma1))?;
    let v0: Vec<f64> = (0..cfg.n).map(|_| d0.sample(&mut rng)).collect();
    let mut v1 = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let mut tries = 0;
        let x = loop {
            let x = d1.sample(&mut rng);
            if x > 0.0 {
                break x;
            }
            tries += 1;
            if tries > MAX_REDRAWS {
                return Err(bad("v1 draw (no positive sample)", x));
            }
        };
        v1.push(x);
    }
    let forced = |what: &'static str, v: &Option<Vec<f64>>, drawn: Vec<f64>| match v {
        Some(v) if v.len() != cfg.n => Err(bad(what, v.len() as f64)),
        Some(v) => Ok(v.clone()),
        None => Ok(drawn),
    };
    let v0 = forced("v0 length", &cfg.v0, v0)?;
    let v1 = forced("v1 length", &cfg.v1, v1)?;
    if let Some(&bad_v1) = v1.iter().find(|&&x| !(x > 0.0)) {
        return Err(bad("v1", bad_v1));
    }
    Ok((v0, v1))
}

/// Road network with cars on a path, car `i` following car `i + 1`.
pub fn road_model<T: Scalar>(kappa: T, v0: &[T], v1: &[T]) -> Result<NetworkModel<T>, Error> {
    let n = v0.len();
    let nodes = v0
        .iter()
        .zip(v1)
        .map(|(&a, &b)| NodeSystem::traffic(kappa, a, b))
        .collect::<Result<Vec<_>, _>>()?;
    let graph = Graph::path(n)?;
    let controllers = vec![EdgeController::TrafficCoupling; graph.edge_count()];
    Ok(NetworkModel::new(graph, nodes, controllers)?)
}

/// A group of cars sharing one asymptotic velocity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    /// 1-based node indices.
    pub nodes: Vec<usize>,
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    /// Asymptotic velocities in node order.
    pub velocities: Vec<f64>,
    pub clusters: Vec<Cluster>,
    /// 1-based edges with `|μ| ≥ 1 - sat_tol`.
    pub saturated_edges: Vec<usize>,
    /// 1-based edges joining different clusters.
    pub inter_cluster_edges: Vec<usize>,
    pub inter_cluster_saturated: bool,
}

/// Single-linkage clustering of `y` with threshold `cluster_tol`.
pub fn cluster_velocities<T: Scalar>(
    graph: &Graph,
    y: &[T],
    mu: &[T],
    cluster_tol: f64,
    sat_tol: f64,
) -> ClusterSummary {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].as_f64().total_cmp(&y[b].as_f64()));
    let mut label = vec![0usize; y.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        let split = pos == 0 || (y[i] - y[order[pos - 1]]).as_f64() > cluster_tol;
        if split {
            groups.push(Vec::new());
        }
        label[i] = groups.len() - 1;
        groups.last_mut().expect("nonempty").push(i);
    }
    let clusters = groups
        .into_iter()
        .map(|g| {
            let velocity = g.iter().map(|&i| y[i].as_f64()).sum::<f64>() / g.len() as f64;
            let mut nodes: Vec<usize> = g.into_iter().map(|i| i + 1).collect();
            nodes.sort_unstable();
            Cluster { nodes, velocity }
        })
        .collect();
    let saturated_edges: Vec<usize> = mu
        .iter()
        .enumerate()
        .filter(|(_, m)| m.as_f64().abs() >= 1.0 - sat_tol)
        .map(|(k, _)| k + 1)
        .collect();
    let inter_cluster_edges: Vec<usize> = graph
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, &(a, b))| label[a - 1] != label[b - 1])
        .map(|(k, _)| k + 1)
        .collect();
    let inter_cluster_saturated = inter_cluster_edges.iter().all(|k| saturated_edges.contains(k));
    ClusterSummary {
        velocities: y.iter().map(|v| v.as_f64()).collect(),
        clusters,
        saturated_edges,
        inter_cluster_edges,
        inter_cluster_saturated,
    }
}

/// Everything produced by one traffic run.
#[derive(Debug, Clone)]
pub struct TrafficRun {
    pub v0: Vec<f64>,
    pub v1: Vec<f64>,
    pub model: NetworkModel<f64>,
    pub trajectory: Trajectory<f64>,
    pub steady: SteadyState<f64>,
    pub summary: ClusterSummary,
    pub saddle_y: Vec<f64>,
    pub saddle_mu: Vec<f64>,
    /// `‖ȳ - y_saddle‖∞`.
    pub saddle_deviation: f64,
}

/// Draws an instance, simulates it from `v(0) = V⁰`, `η(0) = 0`, clusters the
/// asymptotic velocities and compares them with the saddle point.
pub fn run_traffic(cfg: &TrafficConfig) -> Result<TrafficRun, Error> {
    let (v0, v1) = draw_parameters(cfg)?;
    let model = road_model(cfg.kappa, &v0, &v1)?;
    let opts = SimOptions {
        dt: cfg.dt,
        horizon: cfg.horizon,
        record_stride: cfg.record_stride,
    };
    let eta0 = vec![0.0; cfg.n - 1];
    let trajectory = simulate(&model, &v0, &eta0, &opts)?;
    let steady = detect_steady_state(&model, &trajectory, cfg.window, cfg.steady_tol, cfg.cluster_tol)
        .ok_or(Error::NotSettled { horizon: cfg.horizon })?;
    let summary = cluster_velocities(model.graph(), &steady.y, &steady.mu, cfg.cluster_tol, cfg.sat_tol);
    let saddle = saddle_point(model.incidence(), &v0, &v1)?;
    let saddle_deviation = max_abs_diff(&steady.y, &saddle.y);
    Ok(TrafficRun {
        v0,
        v1,
        model,
        trajectory,
        steady,
        summary,
        saddle_y: saddle.y,
        saddle_mu: saddle.mu,
        saddle_deviation,
    })
}
