//! Closed-loop network assembly and fixed-step RK4 integration.

use serde::Serialize;
use thiserror::Error;

use crate::graph::{Graph, IncidenceMatrix};
use crate::relations::MonotoneRelation;
use crate::scalar::{max_abs, Scalar};
use crate::systems::{EdgeController, NodeSystem, SystemError};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 200.0;
pub const DEFAULT_RECORD_STRIDE: usize = 10;
/// Any state component beyond this magnitude aborts the run.
pub const DIVERGENCE_BOUND: f64 = 1e9;
pub const DEFAULT_STEADY_TOL: f64 = 1e-8;
pub const DEFAULT_AGREEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("model has {got} {what}, graph has {expected}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("node {node} has direct feedthrough and edge {edge} has a feedthrough controller: algebraic loop")]
    AlgebraicLoop { node: usize, edge: usize },
    #[error("equilibrium relation of {element} fails the monotonicity audit")]
    NotMonotone { element: String },
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid simulation setting {what} = {value}")]
    InvalidSetting { what: &'static str, value: f64 },
    #[error("state diverged after t = {last_good_time}")]
    Diverged { last_good_time: f64 },
    #[error("{element}: {source}")]
    System {
        element: String,
        #[source]
        source: SystemError,
    },
}

/// Nodes, controllers and the graph that couples them through `u = -Eμ`, `ζ = Eᵀy`.
#[derive(Debug, Clone)]
pub struct NetworkModel<T> {
    graph: Graph,
    incidence: IncidenceMatrix,
    nodes: Vec<NodeSystem<T>>,
    controllers: Vec<EdgeController<T>>,
    node_relations: Vec<MonotoneRelation<T>>,
    offsets: Vec<usize>,
    state_dim: usize,
    feedthrough_edges: bool,
}

/// The algebraic signals at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Signals<T> {
    pub y: Vec<T>,
    pub u: Vec<T>,
    pub zeta: Vec<T>,
    pub mu: Vec<T>,
}

fn audit_grid<T: Scalar>(rel: &MonotoneRelation<T>) -> Vec<T> {
    let d = rel.domain();
    let mut s: Vec<T> = (0..=200)
        .map(|i| T::lit(-50.0 + 0.5 * i as f64))
        .filter(|&u| d.contains(u))
        .collect();
    s.extend([d.lo, d.hi, T::zero()].into_iter().filter(|x| x.is_finite()));
    s
}

impl<T: Scalar> NetworkModel<T> {
    pub fn new(graph: Graph, nodes: Vec<NodeSystem<T>>, controllers: Vec<EdgeController<T>>) -> Result<Self, SimError> {
        if nodes.len() != graph.node_count() {
            return Err(SimError::CountMismatch {
                what: "nodes",
                expected: graph.node_count(),
                got: nodes.len(),
            });
        }
        if controllers.len() != graph.edge_count() {
            return Err(SimError::CountMismatch {
                what: "controllers",
                expected: graph.edge_count(),
                got: controllers.len(),
            });
        }
        let loop_node = nodes.iter().position(|n| n.has_feedthrough());
        let loop_edge = controllers.iter().position(|c| c.has_feedthrough());
        if let (Some(i), Some(k)) = (loop_node, loop_edge) {
            return Err(SimError::AlgebraicLoop {
                node: i + 1,
                edge: k + 1,
            });
        }
        let mut node_relations = Vec::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            let rel = n.equilibrium_relation().map_err(|source| SimError::System {
                element: format!("node {}", i + 1),
                source,
            })?;
            if !rel.monotonicity_audit(&audit_grid(&rel)).monotone {
                return Err(SimError::NotMonotone {
                    element: format!("node {}", i + 1),
                });
            }
            node_relations.push(rel);
        }
        for (k, c) in controllers.iter().enumerate() {
            let rel = c.equilibrium_relation();
            if !rel.monotonicity_audit(&audit_grid(&rel)).monotone {
                return Err(SimError::NotMonotone {
                    element: format!("edge {}", k + 1),
                });
            }
        }
        let mut offsets = Vec::with_capacity(nodes.len() + 1);
        let mut acc = 0;
        for n in &nodes {
            offsets.push(acc);
            acc += n.state_dim();
        }
        offsets.push(acc);
        Ok(Self {
            incidence: graph.incidence(),
            graph,
            nodes,
            controllers,
            node_relations,
            offsets,
            state_dim: acc,
            feedthrough_edges: loop_edge.is_some(),
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn incidence(&self) -> &IncidenceMatrix {
        &self.incidence
    }

    pub fn nodes(&self) -> &[NodeSystem<T>] {
        &self.nodes
    }

    pub fn controllers(&self) -> &[EdgeController<T>] {
        &self.controllers
    }

    /// Equilibrium relations `k_y` of the nodes, in node order.
    pub fn node_relations(&self) -> &[MonotoneRelation<T>] {
        &self.node_relations
    }

    /// Equilibrium relations `γ` of the controllers, in edge order.
    pub fn edge_relations(&self) -> Vec<MonotoneRelation<T>> {
        self.controllers.iter().map(|c| c.equilibrium_relation()).collect()
    }

    /// Total node state dimension.
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Range of node `i` (0-based) within the stacked node state.
    pub fn node_state_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    fn check_state(&self, x: &[T], eta: &[T]) -> Result<(), SimError> {
        if x.len() != self.state_dim {
            return Err(SimError::DimensionMismatch {
                what: "node state",
                expected: self.state_dim,
                got: x.len(),
            });
        }
        if eta.len() != self.controllers.len() {
            return Err(SimError::DimensionMismatch {
                what: "controller state",
                expected: self.controllers.len(),
                got: eta.len(),
            });
        }
        Ok(())
    }

    /// Evaluates `y`, `u`, `ζ`, `μ` from the states.
    pub fn interconnect(&self, x: &[T], eta: &[T]) -> Result<Signals<T>, SimError> {
        self.check_state(x, eta)?;
        Ok(self.signals(x, eta))
    }

    fn signals(&self, x: &[T], eta: &[T]) -> Signals<T> {
        let e = &self.incidence;
        let node_out = |u: &[T]| -> Vec<T> {
            self.nodes
                .iter()
                .enumerate()
                .map(|(i, n)| n.output_unchecked(&x[self.node_state_range(i)], u[i]))
                .collect()
        };
        if self.feedthrough_edges {
            // node outputs are strictly proper here, so y does not depend on u
            let y = node_out(&vec![T::zero(); self.nodes.len()]);
            let zeta = e.t_apply(&y);
            let mu: Vec<T> = self
                .controllers
                .iter()
                .zip(eta.iter().zip(&zeta))
                .map(|(c, (&h, &z))| c.output(h, z))
                .collect();
            let u = e.apply(&mu).into_iter().map(|v| -v).collect();
            Signals { y, u, zeta, mu }
        } else {
            let mu: Vec<T> = self
                .controllers
                .iter()
                .zip(eta)
                .map(|(c, &h)| c.output(h, T::zero()))
                .collect();
            let u: Vec<T> = e.apply(&mu).into_iter().map(|v| -v).collect();
            let y = node_out(&u);
            let zeta = e.t_apply(&y);
            Signals { y, u, zeta, mu }
        }
    }

    /// Stacked vector field: returns `(ẋ, η̇)`.
    pub fn vector_field(&self, x: &[T], eta: &[T]) -> Result<(Vec<T>, Vec<T>), SimError> {
        self.check_state(x, eta)?;
        let mut dx = vec![T::zero(); x.len()];
        let mut deta = vec![T::zero(); eta.len()];
        self.field_into(x, eta, &mut dx, &mut deta);
        Ok((dx, deta))
    }

    fn field_into(&self, x: &[T], eta: &[T], dx: &mut [T], deta: &mut [T]) {
        let s = self.signals(x, eta);
        for (i, n) in self.nodes.iter().enumerate() {
            let r = self.node_state_range(i);
            n.rhs_into(&x[r.clone()], s.u[i], &mut dx[r]);
        }
        for (k, c) in self.controllers.iter().enumerate() {
            deta[k] = c.rhs(eta[k], s.zeta[k]);
        }
    }

    /// One classical RK4 step of length `dt`.
    pub fn step(&self, x: &[T], eta: &[T], dt: T) -> Result<(Vec<T>, Vec<T>), SimError> {
        self.check_state(x, eta)?;
        let mut xs = x.to_vec();
        let mut es = eta.to_vec();
        let mut work = Rk4Work::new(x.len(), eta.len());
        self.rk4_in_place(&mut xs, &mut es, dt, &mut work);
        if xs.iter().chain(&es).any(|v| !v.is_finite()) {
            return Err(SimError::Diverged { last_good_time: 0.0 });
        }
        Ok((xs, es))
    }

    fn rk4_in_place(&self, x: &mut [T], eta: &mut [T], dt: T, w: &mut Rk4Work<T>) {
        let half = T::lit(0.5);
        let sixth = dt / T::lit(6.0);
        let n = x.len();
        let m = eta.len();
        self.field_into(x, eta, &mut w.kx[0], &mut w.ke[0]);
        for stage in 1..4 {
            let h = if stage == 3 { dt } else { half * dt };
            for i in 0..n {
                w.tx[i] = x[i] + h * w.kx[stage - 1][i];
            }
            for k in 0..m {
                w.te[k] = eta[k] + h * w.ke[stage - 1][k];
            }
            let (kx, ke) = (&mut w.kx[stage], &mut w.ke[stage]);
            self.field_into(&w.tx, &w.te, kx, ke);
        }
        let two = T::lit(2.0);
        for i in 0..n {
            x[i] += sixth * (w.kx[0][i] + two * w.kx[1][i] + two * w.kx[2][i] + w.kx[3][i]);
        }
        for k in 0..m {
            eta[k] += sixth * (w.ke[0][k] + two * w.ke[1][k] + two * w.ke[2][k] + w.ke[3][k]);
        }
    }
}

struct Rk4Work<T> {
    kx: [Vec<T>; 4],
    ke: [Vec<T>; 4],
    tx: Vec<T>,
    te: Vec<T>,
}

impl<T: Scalar> Rk4Work<T> {
    fn new(n: usize, m: usize) -> Self {
        let z = |len| vec![T::zero(); len];
        Self {
            kx: [z(n), z(n), z(n), z(n)],
            ke: [z(m), z(m), z(m), z(m)],
            tx: z(n),
            te: z(m),
        }
    }
}

/// Integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions<T> {
    pub dt: T,
    pub horizon: T,
    pub record_stride: usize,
}

impl<T: Scalar> Default for SimOptions<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(DEFAULT_DT),
            horizon: T::lit(DEFAULT_HORIZON),
            record_stride: DEFAULT_RECORD_STRIDE,
        }
    }
}

/// Recorded time history. Each signal family is stored row-major, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    sample_dt: T,
    step_dt: T,
    n_state: usize,
    n_nodes: usize,
    n_edges: usize,
    t: Vec<T>,
    x: Vec<T>,
    eta: Vec<T>,
    y: Vec<T>,
    u: Vec<T>,
    zeta: Vec<T>,
    mu: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    fn new(model: &NetworkModel<T>, step_dt: T, stride: usize) -> Self {
        Self {
            sample_dt: step_dt * T::from_count(stride),
            step_dt,
            n_state: model.state_dim(),
            n_nodes: model.nodes().len(),
            n_edges: model.controllers().len(),
            t: Vec::new(),
            x: Vec::new(),
            eta: Vec::new(),
            y: Vec::new(),
            u: Vec::new(),
            zeta: Vec::new(),
            mu: Vec::new(),
        }
    }

    fn push(&mut self, t: T, x: &[T], eta: &[T], s: Signals<T>) {
        self.t.push(t);
        self.x.extend_from_slice(x);
        self.eta.extend_from_slice(eta);
        self.y.extend(s.y);
        self.u.extend(s.u);
        self.zeta.extend(s.zeta);
        self.mu.extend(s.mu);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Spacing between recorded samples.
    pub fn sample_dt(&self) -> T {
        self.sample_dt
    }

    /// Integrator step.
    pub fn step_dt(&self) -> T {
        self.step_dt
    }

    pub fn times(&self) -> &[T] {
        &self.t
    }

    pub fn x(&self, s: usize) -> &[T] {
        &self.x[s * self.n_state..(s + 1) * self.n_state]
    }

    pub fn eta(&self, s: usize) -> &[T] {
        &self.eta[s * self.n_edges..(s + 1) * self.n_edges]
    }

    pub fn y(&self, s: usize) -> &[T] {
        &self.y[s * self.n_nodes..(s + 1) * self.n_nodes]
    }

    pub fn u(&self, s: usize) -> &[T] {
        &self.u[s * self.n_nodes..(s + 1) * self.n_nodes]
    }

    pub fn zeta(&self, s: usize) -> &[T] {
        &self.zeta[s * self.n_edges..(s + 1) * self.n_edges]
    }

    pub fn mu(&self, s: usize) -> &[T] {
        &self.mu[s * self.n_edges..(s + 1) * self.n_edges]
    }

    pub fn last(&self) -> usize {
        self.len() - 1
    }

    /// Sample `s` of one signal family.
    pub fn row(&self, family: Family, s: usize) -> &[T] {
        match family {
            Family::X => self.x(s),
            Family::Eta => self.eta(s),
            Family::Y => self.y(s),
            Family::U => self.u(s),
            Family::Zeta => self.zeta(s),
            Family::Mu => self.mu(s),
        }
    }

    /// Column of a node signal (`y` or `u`) or edge signal over all samples.
    pub fn column(&self, family: Family, index: usize) -> Vec<T> {
        let (data, width) = match family {
            Family::X => (&self.x, self.n_state),
            Family::Eta => (&self.eta, self.n_edges),
            Family::Y => (&self.y, self.n_nodes),
            Family::U => (&self.u, self.n_nodes),
            Family::Zeta => (&self.zeta, self.n_edges),
            Family::Mu => (&self.mu, self.n_edges),
        };
        (0..self.len()).map(|s| data[s * width + index]).collect()
    }

    /// CSV header: `t, x1.., eta1.., y1.., u1.., zeta1.., mu1..`.
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        let mut add = |name: &str, count: usize| h.extend((1..=count).map(|i| format!("{name}{i}")));
        add("x", self.n_state);
        add("eta", self.n_edges);
        add("y", self.n_nodes);
        add("u", self.n_nodes);
        add("zeta", self.n_edges);
        add("mu", self.n_edges);
        h
    }

    /// Sample `s` in header order.
    pub fn csv_row(&self, s: usize) -> Vec<T> {
        let mut r = vec![self.t[s]];
        r.extend_from_slice(self.x(s));
        r.extend_from_slice(self.eta(s));
        r.extend_from_slice(self.y(s));
        r.extend_from_slice(self.u(s));
        r.extend_from_slice(self.zeta(s));
        r.extend_from_slice(self.mu(s));
        r
    }
}

/// Signal families stored in a [`Trajectory`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    X,
    Eta,
    Y,
    U,
    Zeta,
    Mu,
}

/// Integrates from `(x0, η0)` over `[0, horizon]`, recording every `record_stride` steps.
///
/// The number of steps is `round(horizon / dt)`; the initial sample is always
/// recorded and so is the final one.
pub fn simulate<T: Scalar>(
    model: &NetworkModel<T>,
    x0: &[T],
    eta0: &[T],
    opts: &SimOptions<T>,
) -> Result<Trajectory<T>, SimError> {
    model.check_state(x0, eta0)?;
    if !(opts.dt > T::zero()) || !opts.dt.is_finite() {
        return Err(SimError::InvalidSetting {
            what: "dt",
            value: opts.dt.as_f64(),
        });
    }
    if !(opts.horizon >= opts.dt) || !opts.horizon.is_finite() {
        return Err(SimError::InvalidSetting {
            what: "horizon",
            value: opts.horizon.as_f64(),
        });
    }
    if opts.record_stride == 0 {
        return Err(SimError::InvalidSetting {
            what: "record_stride",
            value: 0.0,
        });
    }
    let steps = (opts.horizon / opts.dt).round().to_usize().unwrap_or(usize::MAX);
    let bound = T::lit(DIVERGENCE_BOUND);
    let mut traj = Trajectory::new(model, opts.dt, opts.record_stride);
    let mut x = x0.to_vec();
    let mut eta = eta0.to_vec();
    let mut work = Rk4Work::new(x.len(), eta.len());
    traj.push(T::zero(), &x, &eta, model.signals(&x, &eta));
    for k in 1..=steps {
        model.rk4_in_place(&mut x, &mut eta, opts.dt, &mut work);
        let worst = max_abs(&x).max(max_abs(&eta));
        if !(worst <= bound) {
            return Err(SimError::Diverged {
                last_good_time: (opts.dt * T::from_count(k - 1)).as_f64(),
            });
        }
        if k % opts.record_stride == 0 || k == steps {
            let t = opts.dt * T::from_count(k);
            traj.push(t, &x, &eta, model.signals(&x, &eta));
        }
    }
    Ok(traj)
}

/// Averaged terminal equilibrium extracted from a settled trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyState<T> {
    pub time: T,
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub u: Vec<T>,
    pub eta: Vec<T>,
    pub mu: Vec<T>,
    pub zeta: Vec<T>,
    /// Agreement value, present iff `max(ȳ) - min(ȳ) <= agreement_tol`.
    pub beta: Option<T>,
    /// Largest derivative norm seen over the window.
    pub residual: T,
}

/// Checks the last `window` samples for stationarity of `x` and `μ`.
///
/// `ẋ` is evaluated exactly from the vector field; `μ̇` by differences of
/// consecutive samples. `η` itself is not tested because saturated couplings
/// let it drift forever while `μ` settles. Returns `None` when not settled.
pub fn detect_steady_state<T: Scalar>(
    model: &NetworkModel<T>,
    traj: &Trajectory<T>,
    window: usize,
    tol: T,
    agreement_tol: T,
) -> Option<SteadyState<T>> {
    let window = window.max(2);
    if traj.len() < window {
        return None;
    }
    let first = traj.len() - window;
    let mut residual = T::zero();
    for s in first..traj.len() {
        let (dx, _) = model.vector_field(traj.x(s), traj.eta(s)).ok()?;
        residual = residual.max(max_abs(&dx));
        if s > first {
            let h = traj.times()[s] - traj.times()[s - 1];
            for (a, b) in traj.mu(s).iter().zip(traj.mu(s - 1)) {
                residual = residual.max((*a - *b).abs() / h);
            }
        }
        if !(residual <= tol) {
            return None;
        }
    }
    let count = T::from_count(window);
    let mean = |family: Family| -> Vec<T> {
        let mut acc = vec![T::zero(); traj.row(family, first).len()];
        for s in first..traj.len() {
            for (a, &v) in acc.iter_mut().zip(traj.row(family, s)) {
                *a += v;
            }
        }
        acc.into_iter().map(|a| a / count).collect()
    };
    let y = mean(Family::Y);
    let hi = y.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let lo = y.iter().fold(T::infinity(), |a, &b| a.min(b));
    let beta = (hi - lo <= agreement_tol).then(|| y.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(y.len()));
    let last = traj.last();
    Some(SteadyState {
        time: traj.times()[last],
        x: mean(Family::X),
        u: mean(Family::U),
        mu: mean(Family::Mu),
        zeta: mean(Family::Zeta),
        eta: traj.eta(last).to_vec(),
        y,
        beta,
        residual,
    })
}

/// Equilibrium pairs used as the reference of storage functions.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReference<T> {
    pub u: Vec<T>,
    pub y: Vec<T>,
    pub zeta: Vec<T>,
    pub mu: Vec<T>,
}

impl<T: Scalar> EquilibriumReference<T> {
    /// Reference built from the potentials and flows, with `u = -Eμ` and `ζ = Eᵀy`.
    pub fn from_potentials(e: &IncidenceMatrix, y: Vec<T>, mu: Vec<T>) -> Self {
        Self {
            u: e.apply(&mu).into_iter().map(|v| -v).collect(),
            zeta: e.t_apply(&y),
            y,
            mu,
        }
    }
}

/// Storage sum `Σ Sᵢ + Σ W_k` at every sample.
pub fn storage_series<T: Scalar>(
    model: &NetworkModel<T>,
    traj: &Trajectory<T>,
    reference: &EquilibriumReference<T>,
) -> Result<Vec<T>, SimError> {
    let mut x_bar = Vec::with_capacity(model.nodes().len());
    for (i, n) in model.nodes().iter().enumerate() {
        let xb = n
            .equilibrium_state(reference.u[i], reference.y[i])
            .map_err(|source| SimError::System {
                element: format!("node {}", i + 1),
                source,
            })?;
        x_bar.push(xb);
    }
    for (k, c) in model.controllers().iter().enumerate() {
        c.storage_value(T::zero(), reference.zeta[k], reference.mu[k])
            .map_err(|source| SimError::System {
                element: format!("edge {}", k + 1),
                source,
            })?;
    }
    Ok((0..traj.len())
        .map(|s| {
            let x = traj.x(s);
            let nodes = model.nodes().iter().enumerate().fold(T::zero(), |acc, (i, n)| {
                acc + n.storage_at(&x[model.node_state_range(i)], &x_bar[i])
            });
            model.controllers().iter().enumerate().fold(nodes, |acc, (k, c)| {
                acc + c.storage_unchecked(traj.eta(s)[k], reference.zeta[k], reference.mu[k])
            })
        })
        .collect())
}

/// Largest increase of the storage sum between consecutive samples (0 if none).
pub fn lyapunov_audit<T: Scalar>(
    model: &NetworkModel<T>,
    traj: &Trajectory<T>,
    reference: &EquilibriumReference<T>,
) -> Result<T, SimError> {
    let s = storage_series(model, traj, reference)?;
    Ok(s.windows(2).fold(T::zero(), |m, w| m.max(w[1] - w[0])))
}
