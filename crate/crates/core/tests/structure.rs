//! Incidence identities on random connected graphs and covariance of the
//! network program under edge reversal.

use passive_nets::graph::{Graph, NetworkVariables, Subspace};
use passive_nets::linalg::DenseMatrix;
use passive_nets::optimizer::{solve, NetworkProgram};
use passive_nets::relations::MonotoneRelation;
use passive_nets::simulator::{simulate, NetworkModel, SimOptions};
use passive_nets::systems::{AffineNode, EdgeController, NodeSystem};
use proptest::prelude::*;

type R = MonotoneRelation<f64>;

/// Random spanning tree plus extra edges, with random orientations.
fn connected_graph(max_nodes: usize) -> impl Strategy<Value = Graph> {
    (2..=max_nodes).prop_flat_map(|n| {
        let tree = prop::collection::vec((any::<prop::sample::Index>(), any::<bool>()), n - 1);
        let extra = prop::collection::vec((0..n, 0..n), 0..n);
        (Just(n), tree, extra).prop_map(|(n, tree, extra)| {
            let mut edges = Vec::new();
            for (i, (parent, flip)) in tree.into_iter().enumerate() {
                let child = i + 2;
                let p = parent.index(child - 1) + 1;
                edges.push(if flip { (child, p) } else { (p, child) });
            }
            edges.extend(extra.into_iter().filter(|(a, b)| a != b).map(|(a, b)| (a + 1, b + 1)));
            Graph::new(n, edges).unwrap()
        })
    })
}

fn graph_and_vectors() -> impl Strategy<Value = (Graph, Vec<f64>, Vec<f64>)> {
    connected_graph(9).prop_flat_map(|g| {
        let (n, m) = (g.node_count(), g.edge_count());
        (
            Just(g),
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(-10.0..10.0f64, m),
        )
    })
}

/// Dense product with the matrix rows, as an independent reference.
fn dense_tension(rows: &[Vec<i8>], y: &[f64], m: usize) -> Vec<f64> {
    (0..m)
        .map(|k| rows.iter().zip(y).map(|(r, &yi)| r[k] as f64 * yi).sum())
        .collect()
}

fn dense_divergence(rows: &[Vec<i8>], mu: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|r| -r.iter().zip(mu).map(|(&e, &m)| e as f64 * m).sum::<f64>())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn incidence_identities((g, y, mu) in graph_and_vectors()) {
        let e = g.incidence();
        let rows = e.rows();
        for (k, &(i, j)) in g.edges().iter().enumerate() {
            let col: Vec<i8> = rows.iter().map(|r| r[k]).collect();
            prop_assert_eq!(col.iter().map(|&x| x as i32).sum::<i32>(), 0);
            prop_assert_eq!(col[i - 1], 1);
            prop_assert_eq!(col[j - 1], -1);
            prop_assert_eq!(col.iter().filter(|&&x| x != 0).count(), 2);
        }
        let zeta = e.tension_of(&y).unwrap();
        let u = e.divergence_of(&mu).unwrap();
        let scale = 1.0 + y.iter().chain(&mu).fold(0.0f64, |a, &b| a.max(b.abs()));
        for (a, b) in zeta.iter().zip(dense_tension(&rows, &y, g.edge_count())) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
        for (a, b) in u.iter().zip(dense_divergence(&rows, &mu)) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }

        let vars = NetworkVariables::consistent(&e, y.clone(), mu.clone()).unwrap();
        let conv = vars.conversion_identity_residual().unwrap();
        let size = (g.node_count() + g.edge_count()) as f64;
        prop_assert!(conv <= 1e-12 * scale * scale * size, "μᵀζ + yᵀu = {}", conv);
        prop_assert!(vars.interconnection_residual(&e) == 0.0);

        // divergences sum to zero, tensions are differentials, constants have no tension
        prop_assert!(e.subspace_residual(&u, Subspace::Range).unwrap() <= 1e-12 * scale * size);
        prop_assert!(e.subspace_residual(&zeta, Subspace::Differential).unwrap() <= 1e-10 * scale * size);
        let flat = e.tension_of(&vec![y[0]; g.node_count()]).unwrap();
        prop_assert!(flat.iter().all(|&z| z == 0.0));
        prop_assert!(e.subspace_residual(&vec![y[0]; g.node_count()], Subspace::Agreement).unwrap() == 0.0);
    }

    #[test]
    fn circulations_are_orthogonal_to_tensions((g, y, mu) in graph_and_vectors()) {
        let e = g.incidence();
        let (n, m) = (g.node_count(), g.edge_count());
        let rows = e.rows();
        // φ = (EEᵀ + 𝟙𝟙ᵀ/n)⁻¹ Eμ, then μ - Eᵀφ carries no divergence
        let mut l = vec![1.0 / n as f64; n * n];
        for i in 0..n {
            for j in 0..n {
                l[i * n + j] += (0..m).map(|k| (rows[i][k] * rows[j][k]) as f64).sum::<f64>();
            }
        }
        let emu: Vec<f64> = dense_divergence(&rows, &mu).into_iter().map(|v| -v).collect();
        let phi = DenseMatrix::from_row_major(n, n, l).solve(&emu, 1e-14).unwrap();
        let grad = dense_tension(&rows, &phi, m);
        let circ: Vec<f64> = mu.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let scale = 1.0 + mu.iter().fold(0.0f64, |a, &b| a.max(b.abs()));

        let div = e.divergence_of(&circ).unwrap();
        prop_assert!(div.iter().all(|d| d.abs() <= 1e-9 * scale), "{:?}", div);
        prop_assert!(e.subspace_residual(&circ, Subspace::Circulation).unwrap() <= 1e-9 * scale);
        prop_assert!(e.subspace_residual(&grad, Subspace::Differential).unwrap() <= 1e-9 * scale);
        let zeta = e.tension_of(&y).unwrap();
        let inner: f64 = zeta.iter().zip(&circ).map(|(a, b)| a * b).sum();
        let yscale = 1.0 + y.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        prop_assert!(inner.abs() <= 1e-9 * scale * yscale * m as f64, "ζᵀμ = {}", inner);
    }
}

#[test]
fn dimension_mismatch_is_reported() {
    let g = Graph::path(3).unwrap();
    let e = g.incidence();
    assert!(e.tension_of(&[1.0, 2.0]).is_err());
    assert!(e.divergence_of(&[1.0]).is_err());
    assert!(e.subspace_residual(&[1.0], Subspace::Circulation).is_err());
}

#[test]
fn disconnected_and_looped_graphs_are_rejected() {
    assert!(Graph::new(3, vec![(1, 2)]).is_err());
    assert!(Graph::new(2, vec![(1, 1), (1, 2)]).is_err());
    assert!(Graph::new(2, vec![(1, 3)]).is_err());
}

/// `γ'(ζ) = -γ(-ζ)`, the edge relation seen through a reversed edge.
fn reflect(r: &R) -> R {
    match *r {
        R::Affine { slope, offset } => R::Affine { slope, offset: -offset },
        R::SignSaturation { lo, hi, at } => R::SignSaturation {
            lo: -hi,
            hi: -lo,
            at: -at,
        },
        R::Tanh { gain } => R::Tanh { gain },
        ref other => panic!("no reflection for {other:?}"),
    }
}

fn edge_relation() -> impl Strategy<Value = R> {
    prop_oneof![
        (0.2..3.0f64, -2.0..2.0f64).prop_map(|(slope, offset)| R::Affine { slope, offset }),
        (-2.0..-0.1f64, 0.1..2.0f64, -1.0..1.0f64).prop_map(|(lo, hi, at)| R::SignSaturation { lo, hi, at }),
        (0.3..3.0f64).prop_map(|gain| R::Tanh { gain }),
    ]
}

fn flip_case() -> impl Strategy<Value = (Graph, Vec<R>, Vec<R>, usize)> {
    connected_graph(4).prop_flat_map(|g| {
        let (n, m) = (g.node_count(), g.edge_count());
        let nodes = prop::collection::vec(
            (0.5..3.0f64, -5.0..5.0f64).prop_map(|(slope, offset)| R::Affine { slope, offset }),
            n,
        );
        (Just(g), nodes, prop::collection::vec(edge_relation(), m), 1..=m)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reversing_an_edge_reflects_its_flow((g, nodes, edges, k) in flip_case()) {
        let base = solve(&NetworkProgram::gofp(g.clone(), nodes.clone(), edges.clone()).unwrap()).unwrap();
        let mut flipped_edges = edges.clone();
        flipped_edges[k - 1] = reflect(&edges[k - 1]);
        let flipped = solve(&NetworkProgram::gofp(g.with_flipped_edge(k), nodes, flipped_edges).unwrap()).unwrap();
        for (a, b) in base.y.iter().zip(&flipped.y) {
            prop_assert!((a - b).abs() <= 1e-10, "y {:?} vs {:?}", base.y, flipped.y);
        }
        for (a, b) in base.u.iter().zip(&flipped.u) {
            prop_assert!((a - b).abs() <= 1e-10, "u {:?} vs {:?}", base.u, flipped.u);
        }
        prop_assert!((base.zeta[k - 1] + flipped.zeta[k - 1]).abs() <= 1e-10);
        prop_assert!((base.value_potential - flipped.value_potential).abs() <= 1e-10 * (1.0 + base.value_potential.abs()));
    }
}

fn controller() -> impl Strategy<Value = ControllerPair> {
    prop_oneof![
        (0.2..3.0f64, -1.0..1.0f64).prop_map(|(slope, offset)| {
            (
                EdgeController::integrator(R::Affine { slope, offset }).unwrap(),
                EdgeController::integrator(R::Affine { slope, offset: -offset }).unwrap(),
            )
        }),
        (0.1..2.0f64).prop_map(|leak| (
            EdgeController::damped(leak).unwrap(),
            EdgeController::damped(leak).unwrap()
        )),
        Just((EdgeController::TrafficCoupling, EdgeController::TrafficCoupling)),
    ]
}

/// A controller and its counterpart on the reversed edge.
type ControllerPair = (EdgeController<f64>, EdgeController<f64>);

fn sim_flip_case() -> impl Strategy<Value = (Graph, Vec<f64>, Vec<ControllerPair>, Vec<f64>, usize)> {
    connected_graph(5).prop_flat_map(|g| {
        let (n, m) = (g.node_count(), g.edge_count());
        (
            Just(g),
            prop::collection::vec(-3.0..3.0f64, n),
            prop::collection::vec(controller(), m),
            prop::collection::vec(-1.0..1.0f64, m),
            1..=m,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reversing_an_edge_reflects_the_simulation((g, w, ctrls, eta0, k) in sim_flip_case()) {
        let nodes: Vec<NodeSystem<f64>> = w
            .iter()
            .map(|&wi| NodeSystem::Affine(AffineNode::scalar(-1.0, 1.0, 1.0, 0.0, 1.0, 0.0, wi).unwrap()))
            .collect();
        let base_ctrls: Vec<_> = ctrls.iter().map(|c| c.0.clone()).collect();
        let mut flip_ctrls = base_ctrls.clone();
        flip_ctrls[k - 1] = ctrls[k - 1].1.clone();
        let mut flip_eta0 = eta0.clone();
        flip_eta0[k - 1] = -eta0[k - 1];
        let x0 = vec![0.5; g.node_count()];
        let opts = SimOptions { dt: 1e-2, horizon: 5.0, record_stride: 10 };
        let a = simulate(&NetworkModel::new(g.clone(), nodes.clone(), base_ctrls).unwrap(), &x0, &eta0, &opts).unwrap();
        let b = simulate(&NetworkModel::new(g.with_flipped_edge(k), nodes, flip_ctrls).unwrap(), &x0, &flip_eta0, &opts).unwrap();
        for s in 0..a.len() {
            for (p, q) in a.y(s).iter().zip(b.y(s)) {
                prop_assert!((p - q).abs() <= 1e-10, "y at sample {}", s);
            }
            for (p, q) in a.u(s).iter().zip(b.u(s)) {
                prop_assert!((p - q).abs() <= 1e-10, "u at sample {}", s);
            }
            prop_assert!((a.mu(s)[k - 1] + b.mu(s)[k - 1]).abs() <= 1e-10);
            prop_assert!((a.eta(s)[k - 1] + b.eta(s)[k - 1]).abs() <= 1e-10);
            prop_assert!((a.zeta(s)[k - 1] + b.zeta(s)[k - 1]).abs() <= 1e-10);
        }
    }
}
