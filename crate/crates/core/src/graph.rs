//! Oriented graphs, their incidence matrix, and the four fundamental subspaces.
//!
//! Node and edge indices are 1-based at the public boundary (matching scenario
//! files) and 0-based internally. Edge `k = (i, j)` has initial node `i` and
//! terminal node `j`, so `E[i][k] = +1`, `E[j][k] = -1`, and the tension is
//! `(Eᵀy)_k = y_i - y_j`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::scalar::{dot, max_abs, norm2, Scalar};

/// Default tolerance for [`IncidenceMatrix::is_member`].
pub const SUBSPACE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("a graph needs at least one node")]
    NoNodes,
    #[error("edge {edge} references node {node}, but the graph has {node_count} nodes")]
    NodeOutOfRange {
        edge: usize,
        node: usize,
        node_count: usize,
    },
    #[error("edge {edge} is a self-loop at node {node}")]
    SelfLoop { edge: usize, node: usize },
    #[error("graph is disconnected: node {unreached} cannot be reached from node 1")]
    Disconnected { unreached: usize },
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// A connected oriented graph with 1-based edge endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    nodes: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<RawGraph> for Graph {
    type Error = GraphError;
    fn try_from(raw: RawGraph) -> Result<Self, GraphError> {
        Graph::new(raw.nodes, raw.edges.into_iter().map(|[i, j]| (i, j)).collect())
    }
}

impl From<Graph> for RawGraph {
    fn from(g: Graph) -> Self {
        RawGraph {
            nodes: g.node_count,
            edges: g.edges.into_iter().map(|(i, j)| [i, j]).collect(),
        }
    }
}

impl Graph {
    /// Validates endpoints, rejects self-loops, and checks connectivity.
    /// Parallel edges are allowed.
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::NoNodes);
        }
        for (k, &(i, j)) in edges.iter().enumerate() {
            for node in [i, j] {
                if node == 0 || node > node_count {
                    return Err(GraphError::NodeOutOfRange {
                        edge: k + 1,
                        node,
                        node_count,
                    });
                }
            }
            if i == j {
                return Err(GraphError::SelfLoop { edge: k + 1, node: i });
            }
        }
        let g = Self { node_count, edges };
        if let Some(unreached) = g.first_unreached() {
            return Err(GraphError::Disconnected { unreached });
        }
        Ok(g)
    }

    /// Path `1 - 2 - ... - n` with edges oriented `(k, k+1)`.
    pub fn path(n: usize) -> Result<Self, GraphError> {
        Self::new(n, (1..n).map(|k| (k, k + 1)).collect())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as 1-based `(initial, terminal)` pairs.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// The same graph with edge `k` (1-based) reversed.
    pub fn with_flipped_edge(&self, k: usize) -> Self {
        let mut g = self.clone();
        let e = &mut g.edges[k - 1];
        *e = (e.1, e.0);
        g
    }

    pub fn incidence(&self) -> IncidenceMatrix {
        IncidenceMatrix::new(self)
    }

    fn first_unreached(&self) -> Option<usize> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(i, j) in &self.edges {
            adj[i - 1].push(j - 1);
            adj[j - 1].push(i - 1);
        }
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.iter().position(|s| !s).map(|i| i + 1)
    }
}

/// The four fundamental subspaces of the incidence matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subspace {
    /// `N(E)`, edge space: flows with zero divergence.
    Circulation,
    /// `N(Eᵀ)`, node space: constant potentials on a connected graph.
    Agreement,
    /// `R(E)`, node space: vectors summing to zero on a connected graph.
    Range,
    /// `R(Eᵀ)`, edge space: tensions of some potential.
    Differential,
}

/// Dense node-by-edge incidence matrix with entries in `{-1, 0, +1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix {
    nodes: usize,
    // 0-based (initial, terminal) per edge
    ends: Vec<(usize, usize)>,
    entries: Vec<i8>,
}

impl IncidenceMatrix {
    pub fn new(graph: &Graph) -> Self {
        let n = graph.node_count();
        let m = graph.edge_count();
        let ends: Vec<_> = graph.edges().iter().map(|&(i, j)| (i - 1, j - 1)).collect();
        let mut entries = vec![0i8; n * m];
        for (k, &(i, j)) in ends.iter().enumerate() {
            entries[i * m + k] = 1;
            entries[j * m + k] = -1;
        }
        Self {
            nodes: n,
            ends,
            entries,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn edge_count(&self) -> usize {
        self.ends.len()
    }

    /// Entry at 0-based `(node, edge)`.
    pub fn entry(&self, node: usize, edge: usize) -> i8 {
        self.entries[node * self.edge_count() + edge]
    }

    /// 0-based `(initial, terminal)` of edge `k` (0-based).
    pub fn ends(&self, k: usize) -> (usize, usize) {
        self.ends[k]
    }

    /// Row-major matrix rows, one per node.
    pub fn rows(&self) -> Vec<Vec<i8>> {
        self.entries
            .chunks(self.edge_count().max(1))
            .take(self.nodes)
            .map(|r| if self.edge_count() == 0 { Vec::new() } else { r.to_vec() })
            .collect()
    }

    /// `Eᵀy` without dimension checks.
    pub(crate) fn t_apply<T: Scalar>(&self, y: &[T]) -> Vec<T> {
        self.ends.iter().map(|&(i, j)| y[i] - y[j]).collect()
    }

    /// `Eμ` without dimension checks.
    pub(crate) fn apply<T: Scalar>(&self, mu: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.nodes];
        for (&(i, j), &m) in self.ends.iter().zip(mu) {
            out[i] += m;
            out[j] -= m;
        }
        out
    }

    /// Tension `ζ = Eᵀy`.
    pub fn tension_of<T: Scalar>(&self, y: &[T]) -> Result<Vec<T>, GraphError> {
        self.check(y.len(), self.nodes, "potential")?;
        Ok(self.t_apply(y))
    }

    /// Divergence `u = -Eμ`, so that `u + Eμ = 0`.
    pub fn divergence_of<T: Scalar>(&self, mu: &[T]) -> Result<Vec<T>, GraphError> {
        self.check(mu.len(), self.edge_count(), "flow")?;
        Ok(self.apply(mu).into_iter().map(|x| -x).collect())
    }

    /// `E diag(w) Eᵀ + 𝟙𝟙ᵀ/n`, positive definite on a connected graph for `w > 0`.
    pub(crate) fn grounded_laplacian<T: Scalar>(&self, w: &[T]) -> DenseMatrix<T> {
        let n = self.nodes;
        let shift = T::one() / T::from_count(n);
        let mut l = DenseMatrix::from_row_major(n, n, vec![shift; n * n]);
        for (&(i, j), &wk) in self.ends.iter().zip(w) {
            l[(i, i)] += wk;
            l[(j, j)] += wk;
            l[(i, j)] -= wk;
            l[(j, i)] -= wk;
        }
        l
    }

    /// Projection of an edge vector onto `R(Eᵀ)`, via the grounded Laplacian.
    fn project_differential<T: Scalar>(&self, v: &[T]) -> Vec<T> {
        let l = self.grounded_laplacian(&vec![T::one(); self.edge_count()]);
        let rhs = self.apply(v);
        let phi = l
            .solve(&rhs, T::epsilon())
            .expect("grounded Laplacian of a connected graph is invertible");
        self.t_apply(&phi)
    }

    /// Residual of `v` with respect to the chosen subspace; zero means exact membership.
    ///
    /// Agreement uses `max(v) - min(v)`; range uses `|𝟙ᵀv|/√n`; the edge spaces
    /// use the Euclidean norm of the orthogonal complement component.
    pub fn subspace_residual<T: Scalar>(&self, v: &[T], which: Subspace) -> Result<T, GraphError> {
        match which {
            Subspace::Agreement | Subspace::Range => self.check(v.len(), self.nodes, "node vector")?,
            Subspace::Circulation | Subspace::Differential => self.check(v.len(), self.edge_count(), "edge vector")?,
        }
        Ok(match which {
            Subspace::Agreement => {
                let hi = v.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
                let lo = v.iter().fold(T::infinity(), |a, &b| a.min(b));
                hi - lo
            }
            Subspace::Range => {
                let s = v.iter().fold(T::zero(), |a, &b| a + b);
                s.abs() / T::from_count(self.nodes).sqrt()
            }
            Subspace::Circulation => {
                if v.is_empty() {
                    T::zero()
                } else {
                    norm2(&self.project_differential(v))
                }
            }
            Subspace::Differential => {
                if v.is_empty() {
                    T::zero()
                } else {
                    let p = self.project_differential(v);
                    let r: Vec<T> = v.iter().zip(&p).map(|(&a, &b)| a - b).collect();
                    norm2(&r)
                }
            }
        })
    }

    /// True iff [`Self::subspace_residual`] is at most `tol`.
    pub fn is_member<T: Scalar>(&self, v: &[T], which: Subspace, tol: T) -> Result<bool, GraphError> {
        Ok(self.subspace_residual(v, which)? <= tol)
    }

    fn check(&self, got: usize, expected: usize, what: &'static str) -> Result<(), GraphError> {
        if got == expected {
            Ok(())
        } else {
            Err(GraphError::DimensionMismatch { what, expected, got })
        }
    }
}

/// Potential, divergence, tension and flow of one network configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkVariables<T> {
    pub y: Vec<T>,
    pub u: Vec<T>,
    pub zeta: Vec<T>,
    pub mu: Vec<T>,
}

impl<T: Scalar> NetworkVariables<T> {
    /// Builds the consistent quadruple `ζ = Eᵀy`, `u = -Eμ`.
    pub fn consistent(e: &IncidenceMatrix, y: Vec<T>, mu: Vec<T>) -> Result<Self, GraphError> {
        let zeta = e.tension_of(&y)?;
        let u = e.divergence_of(&mu)?;
        Ok(Self { y, u, zeta, mu })
    }

    /// `|μᵀζ + yᵀu|`, zero for consistent quadruples.
    pub fn conversion_identity_residual(&self) -> Result<T, GraphError> {
        if self.y.len() != self.u.len() {
            return Err(GraphError::DimensionMismatch {
                what: "divergence",
                expected: self.y.len(),
                got: self.u.len(),
            });
        }
        if self.mu.len() != self.zeta.len() {
            return Err(GraphError::DimensionMismatch {
                what: "tension",
                expected: self.mu.len(),
                got: self.zeta.len(),
            });
        }
        Ok((dot(&self.mu, &self.zeta) + dot(&self.y, &self.u)).abs())
    }

    /// `max(‖u + Eμ‖∞, ‖ζ - Eᵀy‖∞)`.
    pub fn interconnection_residual(&self, e: &IncidenceMatrix) -> T {
        let emu = e.apply(&self.mu);
        let r1: Vec<T> = self.u.iter().zip(&emu).map(|(&a, &b)| a + b).collect();
        let ety = e.t_apply(&self.y);
        let r2: Vec<T> = self.zeta.iter().zip(&ety).map(|(&a, &b)| a - b).collect();
        max_abs(&r1).max(max_abs(&r2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::new(3, vec![(1, 2), (2, 3), (3, 1)]).unwrap()
    }

    #[test]
    fn incidence_of_small_graphs() {
        let p = Graph::path(3).unwrap().incidence();
        assert_eq!(p.rows(), vec![vec![1, 0], vec![-1, 1], vec![0, -1]]);
        let s = Graph::path(2).unwrap().incidence();
        assert_eq!(s.rows(), vec![vec![1], vec![-1]]);
        let t = triangle().incidence();
        let cols: Vec<Vec<i8>> = (0..3).map(|k| (0..3).map(|i| t.entry(i, k)).collect()).collect();
        assert_eq!(cols, vec![vec![1, -1, 0], vec![0, 1, -1], vec![-1, 0, 1]]);
    }

    #[test]
    fn rejects_bad_graphs() {
        assert_eq!(
            Graph::new(3, vec![(1, 2)]),
            Err(GraphError::Disconnected { unreached: 3 })
        );
        assert_eq!(
            Graph::new(2, vec![(1, 1), (1, 2)]),
            Err(GraphError::SelfLoop { edge: 1, node: 1 })
        );
        assert!(matches!(
            Graph::new(2, vec![(1, 3)]),
            Err(GraphError::NodeOutOfRange { node: 3, .. })
        ));
        assert!(Graph::new(2, vec![(1, 2), (2, 1)]).is_ok());
        assert!(Graph::new(1, vec![]).is_ok());
    }

    #[test]
    fn tension_examples() {
        let p = Graph::path(3).unwrap().incidence();
        assert_eq!(p.tension_of(&[2.0, 2.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(p.tension_of(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let s = Graph::path(2).unwrap().incidence();
        assert_eq!(s.tension_of(&[10.0, 40.0]).unwrap(), vec![-30.0]);
        assert!(s.tension_of(&[1.0]).is_err());
    }

    #[test]
    fn divergence_examples() {
        let s = Graph::path(2).unwrap().incidence();
        assert_eq!(s.divergence_of(&[-1.0]).unwrap(), vec![1.0, -1.0]);
        let t = triangle().incidence();
        assert_eq!(t.divergence_of(&[1.0, 1.0, 1.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        let p = Graph::path(3).unwrap().incidence();
        assert_eq!(p.divergence_of(&[1.0, 1.0]).unwrap(), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn subspace_examples() {
        let p = Graph::path(3).unwrap().incidence();
        assert!(p.is_member(&[3.0, 3.0, 3.0], Subspace::Agreement, 1e-9).unwrap());
        let s = Graph::path(2).unwrap().incidence();
        assert!(s.is_member(&[1.0, -1.0], Subspace::Range, 1e-9).unwrap());
        let t = triangle().incidence();
        assert!(!t.is_member(&[1.0, 0.0, 0.0], Subspace::Circulation, 1e-9).unwrap());
        assert!(t.is_member(&[1.0, 1.0, 1.0], Subspace::Circulation, 1e-9).unwrap());
        assert!(t.is_member(&[1.0, 0.0, -1.0], Subspace::Differential, 1e-9).unwrap());
        assert!(!t.is_member(&[1.0, 1.0, 1.0], Subspace::Differential, 1e-9).unwrap());
        assert!(p.subspace_residual(&[1.0, 2.0], Subspace::Agreement).is_err());
    }

    #[test]
    fn conversion_examples() {
        let s = Graph::path(2).unwrap().incidence();
        let v = NetworkVariables {
            y: vec![10.0, 40.0],
            u: vec![1.0, -1.0],
            zeta: vec![-30.0],
            mu: vec![-1.0],
        };
        assert_eq!(v.conversion_identity_residual().unwrap(), 0.0);
        let z = NetworkVariables::consistent(&s, vec![3.0, -7.0], vec![0.0]).unwrap();
        assert_eq!(z.conversion_identity_residual().unwrap(), 0.0);
        assert_eq!(z.interconnection_residual(&s), 0.0);
    }

    #[test]
    fn graph_json_round_trip() {
        let g: Graph = serde_json::from_str(r#"{"nodes":3,"edges":[[1,2],[2,3]]}"#).unwrap();
        assert_eq!(g, Graph::path(3).unwrap());
        assert!(serde_json::from_str::<Graph>(r#"{"nodes":3,"edges":[[1,2]]}"#).is_err());
    }
}
