//! Type B normalization of the fiber derivative and fiber linearization.

use super::{ChartKind, ChartSystem, Stage, VertexChange};
use crate::cheb::{ChebFn, ChebFn2};
use crate::error::{Error, Result};
use crate::linspace;
use serde::{Deserialize, Serialize};

/// Sup over a sample grid of `|F_t(x, y)_1 - sigma_t x|`, skipping points
/// whose image leaves the target chart.
fn first_coord_residual(sys: &ChartSystem, t: usize, sigma: f64, grid: usize) -> f64 {
    let [a, b] = sys.edge(t);
    let c = &sys.charts[a];
    let mut worst: f64 = 0.0;
    for &x in &linspace(c.iu[0], c.iu[1], grid) {
        for &y in &linspace(c.is[0], c.is[1], grid) {
            if let Some(img) = sys.transition(t, [x, y]) {
                if matches!(sys.transitions, super::Transitions::Poly(_)) || sys.contains(b, img) {
                    worst = worst.max((img[0] - sigma * x).abs());
                }
            }
        }
    }
    worst
}

fn require_type_b(sys: &ChartSystem) -> Result<Vec<f64>> {
    let k = sys.stages.len();
    let mut sig = Vec::new();
    for t in 0..sys.graph.edges.len() {
        let s = sys.sigma[t]
            .or_else(|| sys.unstable_slope(k, t))
            .ok_or_else(|| Error::Precondition(format!("edge {t}: transition undefined")))?;
        let r = first_coord_residual(sys, t, s, 17);
        if !(r < 1e-8) {
            return Err(Error::Precondition(format!(
                "edge {t} is not of the form (sigma x, g(x, y)): residual {r:.3e}"
            )));
        }
        sig.push(s);
    }
    Ok(sig)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberNormalizeReport {
    pub lambda: Vec<f64>,
    pub min_delta: f64,
    pub deltas: Vec<ChebFn>,
    /// `sup_x |d_y g'_t(x, 0) - lambda_t|` after the change.
    pub post_residual: f64,
    pub max_factors: usize,
}

/// Rescales the fibers by `Delta_a(x)` so that `d_y g_t(x, 0) = lambda_t`,
/// with `Delta_b(x) = delta_t(x / sigma_t) Delta_a(x / sigma_t)` and
/// `delta_t(x) = d_y g_t(x, 0) / lambda_t`.
pub fn fiber_normalize(sys: &ChartSystem) -> Result<(ChartSystem, FiberNormalizeReport)> {
    let sigma = require_type_b(sys)?;
    let k = sys.stages.len();
    let ne = sys.graph.edges.len();
    let mut lambda = vec![0.0; ne];
    for (t, l) in lambda.iter_mut().enumerate() {
        *l = sys
            .fiber_slope(k, t, 0.0)
            .filter(|v| *v != 0.0)
            .ok_or_else(|| Error::FiberDegenerate { min_delta: 0.0 })?;
    }
    let delta = |t: usize, x: f64| sys.fiber_slope(k, t, x).map(|d| d / lambda[t]).unwrap_or(f64::NAN);
    // Points whose image leaves the target chart are skipped.
    let mut min_delta = f64::INFINITY;
    for t in 0..ne {
        let c = &sys.charts[sys.edge(t)[0]];
        for &x in &linspace(c.iu[0], c.iu[1], 33) {
            let d = delta(t, x);
            if !d.is_nan() {
                min_delta = min_delta.min(d.abs());
            }
        }
    }
    if !(min_delta > 1e-3) {
        return Err(Error::FiberDegenerate { min_delta });
    }
    let max_factors = std::cell::Cell::new(0usize);
    let big_delta = |v: usize, x: f64| -> f64 {
        let (mut u, mut xx, mut prod) = (v, x, 1.0);
        for n in 0..10_000 {
            let Some(t) = sys.graph.incoming(u) else {
                max_factors.set(max_factors.get().max(n));
                break;
            };
            xx /= sigma[t];
            let d = delta(t, xx);
            prod *= d;
            u = sys.edge(t)[0];
            if xx.abs() <= 1e-17 * (1.0 + x.abs()) {
                max_factors.set(max_factors.get().max(n + 1));
                break;
            }
        }
        prod
    };
    // Each Delta covers its collared chart and the image of the collared
    // chart of its predecessor.
    let collared = |iv: [f64; 2]| {
        let w = 0.1 * (iv[1] - iv[0]);
        [iv[0] - w, iv[1] + w]
    };
    let mut deltas = Vec::new();
    for (v, c) in sys.charts.iter().enumerate() {
        let mut dom = collared(c.iu);
        if let Some(t) = sys.graph.incoming(v) {
            let src = collared(sys.charts[sys.edge(t)[0]].iu);
            let (u, w) = (sigma[t] * src[0], sigma[t] * src[1]);
            dom = [dom[0].min(u.min(w)), dom[1].max(u.max(w))];
        }
        deltas.push(ChebFn::fit(|x| big_delta(v, x), dom, 64));
    }
    let mut out = sys.clone();
    out.stages.push(Stage {
        name: "fiber-scale".into(),
        changes: deltas.iter().cloned().map(VertexChange::FiberScale).collect(),
        fiber: None,
    });
    out.kind = out.kind.max(ChartKind::B);
    out.sigma = sigma.iter().map(|&s| Some(s)).collect();
    out.lambda = lambda.iter().map(|&l| Some(l)).collect();
    let post_residual = normalization_residual(&out, &lambda);
    Ok((out, FiberNormalizeReport { lambda, min_delta, deltas, post_residual, max_factors: max_factors.get() }))
}

fn normalization_residual(sys: &ChartSystem, lambda: &[f64]) -> f64 {
    let k = sys.stages.len();
    let mut worst: f64 = 0.0;
    let mut seen = 0usize;
    for (t, l) in lambda.iter().enumerate() {
        let c = &sys.charts[sys.edge(t)[0]];
        for &x in &linspace(c.iu[0], c.iu[1], 33) {
            if let Some(d) = sys.fiber_slope(k, t, x) {
                worst = worst.max((d - l).abs());
                seen += 1;
            }
        }
    }
    if worst.is_nan() || seen == 0 {
        f64::INFINITY
    } else {
        worst
    }
}

/// Data of a fiber-linearizing stage. The conjugacy `psi_a(x, y)` is the
/// limit of the Picard iterates `lambda^{-n} Y_n`, where `Y_n` follows the
/// extended fiber maps `lambda y + rho(x) (g(x, y) - lambda y)`, with `rho`
/// a smoothstep equal to 1 on the chart and 0 beyond the margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberLinearization {
    pub sigma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub iu: Vec<[f64; 2]>,
    pub margin: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Chebyshev snapshots of `psi_a` on the extended charts.
    pub snapshots: Vec<ChebFn2>,
}

impl FiberLinearization {
    pub fn rho(&self, v: usize, x: f64) -> f64 {
        let [lo, hi] = self.iu[v];
        let m = self.margin[v];
        let d = if x < lo { lo - x } else if x > hi { x - hi } else { 0.0 };
        super::smoothstep(1.0 - d / m)
    }
}

impl ChartSystem {
    /// `psi_v(x, y)` of the fiber-linearizing stage `s`.
    pub(crate) fn fiber_psi(&self, s: usize, v: usize, x: f64, y: f64) -> Option<f64> {
        let fl = self.stages[s].fiber.as_ref()?;
        let (mut u, mut xx, mut yy, mut scale) = (v, x, y, 1.0);
        let mut prev = y;
        for _ in 0..fl.max_iter {
            let Some(t) = self.graph.outgoing(u) else { return Some(scale * yy) };
            let rho = fl.rho(u, xx);
            if rho == 0.0 {
                return Some(scale * yy);
            }
            let l = fl.lambda[t];
            let g = self.transition_at(s, t, [xx, yy])?[1];
            yy = l * yy + rho * (g - l * yy);
            xx *= fl.sigma[t];
            scale /= l;
            u = self.edge(t)[1];
            let est = scale * yy;
            if (est - prev).abs() <= 0.01 * fl.tol {
                return Some(est);
            }
            prev = est;
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct LinearizeOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Extension margin as a fraction of the unstable interval.
    pub margin: f64,
    /// Derivative order `i` in the fiber contraction check.
    pub order: i32,
}

impl Default for LinearizeOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 400, margin: 0.1, order: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizeReport {
    /// `sup |d_y g^| |sigma|^i` per edge; each must be below 1.
    pub contraction: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Conjugates a normalized type B system to `(sigma x, lambda y)` in the
/// fibers.
pub fn fiber_linearize(sys: &ChartSystem, opts: &LinearizeOptions) -> Result<(ChartSystem, LinearizeReport)> {
    let sigma = require_type_b(sys)?;
    let k = sys.stages.len();
    let ne = sys.graph.edges.len();
    let lambda: Vec<f64> = (0..ne)
        .map(|t| sys.lambda[t].or_else(|| sys.fiber_slope(k, t, 0.0)).unwrap_or(f64::NAN))
        .collect();
    let res = normalization_residual(sys, &lambda);
    if !(res < 1e-8) {
        return Err(Error::Precondition(format!(
            "fiber derivative along the unstable axis is not constant (residual {res:.3e}); normalize first"
        )));
    }
    let iu: Vec<[f64; 2]> = sys.charts.iter().map(|c| c.iu).collect();
    let margin: Vec<f64> = iu.iter().map(|iv| opts.margin * (iv[1] - iv[0])).collect();
    let mut fl = FiberLinearization {
        sigma: sigma.clone(),
        lambda: lambda.clone(),
        iu: iu.clone(),
        margin: margin.clone(),
        tol: opts.tol,
        max_iter: opts.max_iter,
        snapshots: Vec::new(),
    };
    let mut contraction = Vec::new();
    for t in 0..ne {
        let a = sys.edge(t)[0];
        let c = &sys.charts[a];
        let mut sup: f64 = 0.0;
        for &x in &linspace(iu[a][0] - margin[a], iu[a][1] + margin[a], 17) {
            let rho = fl.rho(a, x);
            for &y in &linspace(c.is[0], c.is[1], 17) {
                let h = 1e-6 * (c.is[1] - c.is[0]);
                let gp = sys.transition_at(k, t, [x, y + h]).map(|p| p[1]);
                let gm = sys.transition_at(k, t, [x, y - h]).map(|p| p[1]);
                let (Some(gp), Some(gm)) = (gp, gm) else { continue };
                let dg = (gp - gm) / (2.0 * h);
                sup = sup.max((lambda[t] + rho * (dg - lambda[t])).abs());
            }
        }
        let v = sup * sigma[t].abs().powi(opts.order);
        if !(v < 1.0) {
            return Err(Error::Precondition(format!(
                "fiber contraction fails on edge {t}: sup|d_y g| * |sigma|^{} = {v:.4} >= 1",
                opts.order
            )));
        }
        contraction.push(v);
    }
    let mut out = sys.clone();
    out.stages.push(Stage {
        name: "fiber-linear".into(),
        changes: vec![VertexChange::FiberLinear; sys.graph.vertices],
        fiber: Some(fl.clone()),
    });
    let s = out.stages.len() - 1;
    for (v, c) in sys.charts.iter().enumerate() {
        let dom = [iu[v][0] - margin[v], iu[v][1] + margin[v], c.is[0], c.is[1]];
        let snap = ChebFn2::fit(|x, y| out.fiber_psi(s, v, x, y).unwrap_or(f64::NAN), dom, 16, 12);
        fl.snapshots.push(snap);
    }
    out.stages[s].fiber = Some(fl);
    out.kind = ChartKind::Linear;
    out.sigma = sigma.iter().map(|&v| Some(v)).collect();
    out.lambda = lambda.iter().map(|&v| Some(v)).collect();
    Ok((out, LinearizeReport { contraction, lambda }))
}
