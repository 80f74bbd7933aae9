//! Independent numerical oracles shared by the property suites and the
//! acceptance run. Each check returns an error already divided by its scale.

#![allow(dead_code)]

use passive_nets::relations::{ConvexIntegral, MonotoneRelation};

pub type R = MonotoneRelation<f64>;

/// Maps `t ∈ [0, 1]` into the domain, keeping artanh away from its poles.
pub fn point_in_domain(r: &R, t: f64) -> f64 {
    if let R::InverseTanh { .. } = r {
        return -0.9 + 1.8 * t;
    }
    let d = r.domain();
    let lo = if d.lo.is_finite() { d.lo } else { -6.0 };
    let hi = if d.hi.is_finite() { d.hi } else { 6.0 };
    lo + (hi - lo) * t
}

/// `sup_y { uy - K*(y) }` by ternary search over the conjugate domain.
pub fn double_conjugate(k: &ConvexIntegral<f64>, u: f64) -> f64 {
    let d = k.conjugate_domain();
    let (mut a, mut b) = (d.lo.max(-1e3), d.hi.min(1e3));
    let g = |y: f64| u * y - k.conjugate(y);
    for _ in 0..400 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if g(m1) < g(m2) {
            a = m1;
        } else {
            b = m2;
        }
    }
    g(0.5 * (a + b))
}

fn kinks(r: &R) -> Vec<f64> {
    match r {
        R::SignSaturation { at, .. } => vec![*at],
        R::PiecewiseLinear(p) => p.points().iter().map(|p| p.0).collect(),
        _ => Vec::new(),
    }
}

/// Richardson-extrapolated central difference of `K` at `u`.
fn richardson(k: &ConvexIntegral<f64>, u: f64, h: f64) -> f64 {
    let d = |h: f64| (k.value(u + h) - k.value(u - h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// `K(u) + K*(y) - uy` at a graph point chosen by `(t, s)`; `None` off the domain.
pub fn fenchel_equality(r: &R, t: f64, s: f64) -> Option<f64> {
    let k = ConvexIntegral::new(r.clone());
    let u = point_in_domain(r, t);
    let iv = r.eval_set(u)?;
    let lo = if iv.lo.is_finite() { iv.lo } else { -5.0 };
    let hi = if iv.hi.is_finite() { iv.hi } else { 5.0 };
    let y = lo + (hi - lo) * s;
    let scale = 1.0 + (u * y).abs() + k.value(u).abs();
    Some(k.fenchel_gap(u, y).abs() / scale)
}

/// Violation of `K(u) + K*(y) ≥ uy` (zero when it holds).
pub fn fenchel_inequality(r: &R, t: f64, y: f64) -> f64 {
    let k = ConvexIntegral::new(r.clone());
    let u = point_in_domain(r, t);
    (-k.fenchel_gap(u, y)).max(0.0) / (1.0 + (u * y).abs())
}

/// `|K(u) - K**(u)|`.
pub fn double_conjugate_error(r: &R, t: f64) -> f64 {
    let k = ConvexIntegral::new(r.clone());
    let u = point_in_domain(r, t);
    let direct = k.value(u);
    (direct - double_conjugate(&k, u)).abs() / (1.0 + direct.abs())
}

/// `|K'(u) - k(u)|` away from kinks and domain ends; `None` where skipped.
pub fn derivative_error(r: &R, t: f64) -> Option<f64> {
    let h = 1e-3;
    let k = ConvexIntegral::new(r.clone());
    let u = point_in_domain(r, t);
    let d = r.domain();
    if u - h < d.lo || u + h > d.hi || kinks(r).iter().any(|&c| (c - u).abs() < 2.0 * h) {
        return None;
    }
    let iv = r.eval_set(u)?;
    if !iv.is_point() {
        return None;
    }
    let scale = 1.0 + iv.lo.abs() + k.value(u).abs();
    Some((richardson(&k, u, h) - iv.lo).abs() / scale)
}

/// Worst of: expansion of both proxes, optimality of the prox, Moreau identity.
pub fn prox_error(r: &R, x1: f64, x2: f64, t: f64) -> f64 {
    let k = ConvexIntegral::new(r.clone());
    let dx = (x1 - x2).abs();
    let expand = |a: f64, b: f64| ((a - b).abs() - dx).max(0.0) / (1.0 + dx);
    let (p1, p2) = (k.prox(x1, t), k.prox(x2, t));
    let (q1, q2) = (k.conjugate_prox(x1, t), k.conjugate_prox(x2, t));
    // (x - p)/t ∈ k(p)
    let optimal = r.graph_residual(p1, (x1 - p1) / t) / (1.0 + x1.abs() / t);
    let moreau = (k.prox(x1, t) + t * k.conjugate_prox(x1 / t, 1.0 / t) - x1).abs() / (1.0 + x1.abs());
    expand(p1, p2).max(expand(q1, q2)).max(optimal).max(moreau)
}
