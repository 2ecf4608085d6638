//! Systems of charts along finite hyperbolic chains and their normal forms.
//!
//! A [`ChartSystem`] keeps its raw charts and transitions and records each
//! normalization as a [`Stage`] of per-vertex coordinate changes. Transitions
//! in the current coordinates are evaluated by composing these changes.

pub mod cocycle;
pub mod fiber;
pub mod manifold;
pub mod straighten;

pub use cocycle::{line_field, smoothstep, Bump, ExtendedCocycle, LineField, LineFieldOptions, NestedBoxes};
pub use fiber::{fiber_linearize, fiber_normalize, FiberLinearization, LinearizeOptions};
pub use manifold::{build_chart_system, gap_chain_system, unstable_segment, UnstableSegment};
pub use straighten::{straighten_unstable, StraightenOptions, StraightenReport};

use crate::cheb::ChebFn;
use crate::error::{Error, Result};
use crate::family::PolyMapFamily;
use crate::poly::Poly3;
use crate::{linspace, Mat2, Point};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// Directed graph in which every vertex has in- and out-degree at most one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartGraph {
    pub vertices: usize,
    pub edges: Vec<[usize; 2]>,
}

impl ChartGraph {
    pub fn new(vertices: usize, edges: Vec<[usize; 2]>) -> Result<Self> {
        let mut ins = vec![0usize; vertices];
        let mut outs = vec![0usize; vertices];
        for e in &edges {
            if e[0] >= vertices || e[1] >= vertices {
                return Err(Error::Invalid(format!("edge {e:?} references a missing vertex")));
            }
            outs[e[0]] += 1;
            ins[e[1]] += 1;
        }
        if ins.iter().chain(&outs).any(|&d| d > 1) {
            return Err(Error::Invalid("chart graph must have in- and out-degree at most 1".into()));
        }
        Ok(Self { vertices, edges })
    }

    pub fn path(n: usize) -> Self {
        Self { vertices: n, edges: (1..n).map(|i| [i - 1, i]).collect() }
    }

    pub fn cycle(n: usize) -> Self {
        Self { vertices: n, edges: (0..n).map(|i| [i, (i + 1) % n]).collect() }
    }

    pub fn incoming(&self, v: usize) -> Option<usize> {
        self.edges.iter().position(|e| e[1] == v)
    }

    pub fn outgoing(&self, v: usize) -> Option<usize> {
        self.edges.iter().position(|e| e[0] == v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    Raw,
    A,
    B,
    Linear,
}

/// Embedding of a coordinate rectangle into the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseChart {
    /// `(x, y) -> origin + x ex + y ey`.
    Affine { origin: Point, ex: Point, ey: Point },
    /// `(x, y) -> gamma(x) + y v`: a curve with straight plaques.
    Plaque { gamma: [ChebFn; 2], v: Point },
}

impl BaseChart {
    pub fn identity() -> Self {
        BaseChart::Affine { origin: [0.0, 0.0], ex: [1.0, 0.0], ey: [0.0, 1.0] }
    }

    pub fn eval(&self, z: Point) -> Point {
        match self {
            BaseChart::Affine { origin, ex, ey } => {
                [origin[0] + z[0] * ex[0] + z[1] * ey[0], origin[1] + z[0] * ex[1] + z[1] * ey[1]]
            }
            BaseChart::Plaque { gamma, v } => {
                [gamma[0].eval(z[0]) + z[1] * v[0], gamma[1].eval(z[0]) + z[1] * v[1]]
            }
        }
    }

    pub fn jac(&self, z: Point) -> Mat2 {
        match self {
            BaseChart::Affine { ex, ey, .. } => Mat2::new(ex[0], ey[0], ex[1], ey[1]),
            BaseChart::Plaque { gamma, v } => {
                let d0 = gamma[0].deriv().eval(z[0]);
                let d1 = gamma[1].deriv().eval(z[0]);
                Mat2::new(d0, v[0], d1, v[1])
            }
        }
    }

    /// Chart coordinates of a planar point, by Newton's method for plaque
    /// charts. `None` when the point is not covered.
    pub fn inverse(&self, w: Point) -> Option<Point> {
        match self {
            BaseChart::Affine { origin, .. } => {
                let m = self.jac([0.0, 0.0]);
                let r = m.lu().solve(&Vector2::new(w[0] - origin[0], w[1] - origin[1]))?;
                Some([r[0], r[1]])
            }
            BaseChart::Plaque { gamma, v } => {
                let dg = [gamma[0].deriv(), gamma[1].deriv()];
                let dom = gamma[0].domain;
                let g0 = [gamma[0].eval(0.0), gamma[1].eval(0.0)];
                let m0 = Mat2::new(dg[0].eval(0.0), v[0], dg[1].eval(0.0), v[1]);
                let s = m0.lu().solve(&Vector2::new(w[0] - g0[0], w[1] - g0[1]))?;
                let mut z = [s[0], s[1]];
                for _ in 0..60 {
                    let x = z[0].clamp(dom[0], dom[1]);
                    z[0] = x;
                    let r = Vector2::new(
                        gamma[0].eval(x) + z[1] * v[0] - w[0],
                        gamma[1].eval(x) + z[1] * v[1] - w[1],
                    );
                    let m = Mat2::new(dg[0].eval(x), v[0], dg[1].eval(x), v[1]);
                    let step = m.lu().solve(&r)?;
                    z = [z[0] - step[0], z[1] - step[1]];
                    if step.norm() < 1e-15 * (1.0 + z[0].abs() + z[1].abs()) {
                        break;
                    }
                }
                let span = dom[1] - dom[0];
                (z[0] >= dom[0] - 1e-9 * span && z[0] <= dom[1] + 1e-9 * span).then_some(z)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub iu: [f64; 2],
    pub is: [f64; 2],
    pub base: BaseChart,
    /// Half-width of the horizontal cone in chart coordinates.
    pub cone_half_width: f64,
}

/// Raw transitions: explicit polynomial maps per edge, or induced by a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transitions {
    Poly(Vec<[Poly3; 2]>),
    Map { family: PolyMapFamily, mu: f64 },
}

/// A per-vertex coordinate change, stored as the map from new to old
/// coordinates or its inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexChange {
    Identity,
    /// New `x` is `phi(old x)`; `phi` continues by its tangent lines
    /// beyond its domain.
    Unstable(ChebFn),
    /// Old `y` is `delta(x) * new y`.
    FiberScale(ChebFn),
    /// New `y` is `psi(x, old y)`, evaluated through the stage's
    /// [`FiberLinearization`].
    FiberLinear,
    /// Old `x` is `x + eps x^2`; used for fault injection.
    Warp(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub changes: Vec<VertexChange>,
    pub fiber: Option<FiberLinearization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSystem {
    pub graph: ChartGraph,
    pub charts: Vec<Chart>,
    pub transitions: Transitions,
    pub stages: Vec<Stage>,
    pub kind: ChartKind,
    pub sigma: Vec<Option<f64>>,
    pub lambda: Vec<Option<f64>>,
}

impl ChartSystem {
    /// Identity charts with polynomial transitions, one per edge.
    pub fn synthetic(graph: ChartGraph, iu: Vec<[f64; 2]>, is: Vec<[f64; 2]>, maps: Vec<[Poly3; 2]>) -> Result<Self> {
        if iu.len() != graph.vertices || is.len() != graph.vertices || maps.len() != graph.edges.len() {
            return Err(Error::Invalid("chart and transition counts do not match the graph".into()));
        }
        for iv in iu.iter().chain(&is) {
            if !(iv[0] < 0.0 && 0.0 < iv[1]) {
                return Err(Error::Invalid(format!("interval {iv:?} must contain 0 in its interior")));
            }
        }
        let charts = iu
            .into_iter()
            .zip(is)
            .map(|(iu, is)| Chart { iu, is, base: BaseChart::identity(), cone_half_width: 0.5 })
            .collect();
        let ne = graph.edges.len();
        Ok(Self {
            graph,
            charts,
            transitions: Transitions::Poly(maps),
            stages: Vec::new(),
            kind: ChartKind::Raw,
            sigma: vec![None; ne],
            lambda: vec![None; ne],
        })
    }

    pub fn edge(&self, t: usize) -> [usize; 2] {
        self.graph.edges[t]
    }

    /// Raw transition in base chart coordinates.
    pub fn base_transition(&self, t: usize, z: Point) -> Option<Point> {
        let [a, b] = self.edge(t);
        match &self.transitions {
            Transitions::Poly(maps) => {
                let m = &maps[t];
                Some([m[0].eval(z[0], z[1], 0.0), m[1].eval(z[0], z[1], 0.0)])
            }
            Transitions::Map { family, mu } => {
                let w = self.charts[a].base.eval(z);
                let fw = family.eval(w, *mu);
                self.charts[b].base.inverse(fw)
            }
        }
    }

    /// Coordinates before stage `s` of a point given after it.
    pub fn to_old(&self, s: usize, v: usize, z: Point) -> Option<Point> {
        let st = &self.stages[s];
        match &st.changes[v] {
            VertexChange::Identity => Some(z),
            VertexChange::Unstable(phi) => {
                let x = invert_monotone(|x| phi.eval_extended(x), z[0], z[0])?;
                Some([x, z[1]])
            }
            VertexChange::FiberScale(d) => Some([z[0], d.eval_extended(z[0]) * z[1]]),
            VertexChange::FiberLinear => {
                let y = invert_monotone(|y| self.fiber_psi(s, v, z[0], y).unwrap_or(f64::NAN), z[1], z[1])?;
                Some([z[0], y])
            }
            VertexChange::Warp(e) => Some([z[0] + e * z[0] * z[0], z[1]]),
        }
    }

    /// Coordinates after stage `s` of a point given before it.
    pub fn to_new(&self, s: usize, v: usize, z: Point) -> Option<Point> {
        let st = &self.stages[s];
        match &st.changes[v] {
            VertexChange::Identity => Some(z),
            VertexChange::Unstable(phi) => Some([phi.eval_extended(z[0]), z[1]]),
            VertexChange::FiberScale(d) => {
                let s = d.eval_extended(z[0]);
                (s != 0.0).then(|| [z[0], z[1] / s])
            }
            VertexChange::FiberLinear => Some([z[0], self.fiber_psi(s, v, z[0], z[1])?]),
            VertexChange::Warp(e) => {
                let x = if *e == 0.0 { z[0] } else { 2.0 * z[0] / (1.0 + (1.0 + 4.0 * e * z[0]).sqrt()) };
                Some([x, z[1]])
            }
        }
    }

    /// Transition of edge `t` in the coordinates after the first `k` stages.
    pub fn transition_at(&self, k: usize, t: usize, z: Point) -> Option<Point> {
        let [a, b] = self.edge(t);
        let mut w = z;
        for s in (0..k).rev() {
            w = self.to_old(s, a, w)?;
        }
        let mut u = self.base_transition(t, w)?;
        for s in 0..k {
            u = self.to_new(s, b, u)?;
        }
        (u[0].is_finite() && u[1].is_finite()).then_some(u)
    }

    pub fn transition(&self, t: usize, z: Point) -> Option<Point> {
        self.transition_at(self.stages.len(), t, z)
    }

    /// Planar point of chart coordinates `z` at vertex `v`.
    pub fn chart_point(&self, v: usize, z: Point) -> Option<Point> {
        let mut w = z;
        for s in (0..self.stages.len()).rev() {
            w = self.to_old(s, v, w)?;
        }
        Some(self.charts[v].base.eval(w))
    }

    pub fn contains(&self, v: usize, z: Point) -> bool {
        let c = &self.charts[v];
        z[0] >= c.iu[0] && z[0] <= c.iu[1] && z[1] >= c.is[0] && z[1] <= c.is[1]
    }

    /// Appends a stage that moves the `x` coordinate of one chart by at
    /// most `eps` over its unstable interval.
    pub fn perturbed(&self, v: usize, eps: f64) -> Self {
        let mut out = self.clone();
        let mut changes = vec![VertexChange::Identity; self.graph.vertices];
        let r = self.charts[v].iu[0].abs().max(self.charts[v].iu[1].abs());
        changes[v] = VertexChange::Warp(eps / (r * r));
        out.stages.push(Stage { name: "warp".into(), changes, fiber: None });
        out
    }

    /// `d/dx` at 0 of the first coordinate of `F_t(x, 0)` after `k` stages,
    /// from a Chebyshev fit on a small symmetric interval.
    pub(crate) fn unstable_slope(&self, k: usize, t: usize) -> Option<f64> {
        let c = &self.charts[self.edge(t)[0]];
        let r = 0.25 * c.iu[0].abs().min(c.iu[1]);
        let f = |x: f64| self.transition_at(k, t, [x, 0.0]).map(|p| p[0]).unwrap_or(f64::NAN);
        let fit = ChebFn::fit(f, [-r, r], 24);
        let d = fit.deriv().eval(0.0);
        d.is_finite().then_some(d)
    }

    /// `d/dy` at `(x, 0)` of the second coordinate of `F_t` after `k` stages.
    pub(crate) fn fiber_slope(&self, k: usize, t: usize, x: f64) -> Option<f64> {
        let c = &self.charts[self.edge(t)[0]];
        let r = 0.25 * c.is[0].abs().min(c.is[1]);
        let f = |y: f64| self.transition_at(k, t, [x, y]).map(|p| p[1]).unwrap_or(f64::NAN);
        let fit = ChebFn::fit(f, [-r, r], 16);
        let d = fit.deriv().eval(0.0);
        d.is_finite().then_some(d)
    }
}

/// Solves `f(x) = target` for increasing-near-identity `f` by Newton's method
/// with a finite-difference slope, starting from `seed`.
pub(crate) fn invert_monotone(f: impl Fn(f64) -> f64, target: f64, seed: f64) -> Option<f64> {
    // Newton with step halving whenever an iterate leaves the region where
    // `f` is defined.
    let mut x = seed;
    let mut fx = f(x);
    let mut tries = 0;
    while !fx.is_finite() && tries < 40 {
        x *= 0.5;
        fx = f(x);
        tries += 1;
    }
    if !fx.is_finite() {
        return None;
    }
    for _ in 0..100 {
        let r = fx - target;
        if r.abs() <= 1e-15 * (1.0 + target.abs()) {
            return Some(x);
        }
        let h = 1e-7 * (1.0 + x.abs());
        let (fp, fm) = (f(x + h), f(x - h));
        let d = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            _ => return None,
        };
        if !(d.is_finite() && d != 0.0) {
            return None;
        }
        let mut step = r / d;
        let mut next = f(x - step);
        let mut halvings = 0;
        while !next.is_finite() && halvings < 40 {
            step *= 0.5;
            next = f(x - step);
            halvings += 1;
        }
        if !next.is_finite() {
            return None;
        }
        x -= step;
        fx = next;
        if step.abs() <= 1e-14 * (1.0 + x.abs()) {
            break;
        }
    }
    ((fx - target).abs() < 1e-13).then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SConditions {
    pub s0_residual: f64,
    pub s0: bool,
    /// Preimage of each target unstable interval lies in the source interval.
    pub s1: bool,
    /// Smallest cone slack of the image of the horizontal direction.
    pub s2_min_slack: f64,
    pub s2: bool,
    pub s3: bool,
    /// `(edge, y)` of a horizontal line whose image is not monotone in `x`.
    pub s3_offending: Option<(usize, f64)>,
}

impl SConditions {
    pub fn pass(&self) -> bool {
        self.s0 && self.s1 && self.s2 && self.s3
    }
}

/// Sampled checks of the raw chart conditions.
pub fn s_conditions(sys: &ChartSystem, grid: usize) -> SConditions {
    let mut s0_res: f64 = 0.0;
    let mut s1 = true;
    let mut slack = f64::INFINITY;
    let mut s3_offending = None;
    for t in 0..sys.graph.edges.len() {
        let [a, b] = sys.edge(t);
        let (ca, cb) = (&sys.charts[a], &sys.charts[b]);
        match &sys.transitions {
            Transitions::Map { family, mu } => {
                let w = family.eval(ca.base.eval([0.0, 0.0]), *mu);
                let o = cb.base.eval([0.0, 0.0]);
                s0_res = s0_res.max((w[0] - o[0]).hypot(w[1] - o[1]));
            }
            Transitions::Poly(_) => {
                if let Some(w) = sys.base_transition(t, [0.0, 0.0]) {
                    s0_res = s0_res.max(w[0].hypot(w[1]));
                }
            }
        }
        let f = |x: f64| sys.transition_at(0, t, [x, 0.0]).map(|p| p[0]).unwrap_or(f64::NAN);
        let slope = sys.unstable_slope(0, t).unwrap_or(f64::NAN);
        for &end in &cb.iu {
            match invert_monotone(f, end, end / slope) {
                Some(x) if x >= ca.iu[0] - 1e-12 && x <= ca.iu[1] + 1e-12 => {}
                _ => s1 = false,
            }
        }
        let xs = linspace(ca.iu[0], ca.iu[1], grid);
        for &y in &linspace(ca.is[0], ca.is[1], grid) {
            let mut prev: Option<f64> = None;
            let mut dir = 0.0f64;
            for &x in &xs {
                let Some(img) = sys.transition_at(0, t, [x, y]) else { continue };
                if !sys.contains(b, img) {
                    prev = None;
                    continue;
                }
                let h = 1e-6 * (ca.iu[1] - ca.iu[0]);
                if let (Some(p), Some(m)) = (sys.transition_at(0, t, [x + h, y]), sys.transition_at(0, t, [x - h, y])) {
                    let v = [p[0] - m[0], p[1] - m[1]];
                    let ang = v[1].atan2(v[0]);
                    let d = crate::cone::projective_angle(ang, 0.0);
                    slack = slack.min(cb.cone_half_width - d);
                }
                if let Some(px) = prev {
                    let s = (img[0] - px).signum();
                    if img[0] == px || (dir != 0.0 && s != dir) {
                        s3_offending.get_or_insert((t, y));
                    }
                    dir = s;
                }
                prev = Some(img[0]);
            }
        }
    }
    SConditions {
        s0_residual: s0_res,
        s0: s0_res < 1e-8,
        s1,
        s2_min_slack: slack,
        s2: slack > 0.0,
        s3: s3_offending.is_none(),
        s3_offending,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeResiduals {
    pub edge: usize,
    pub sigma: f64,
    pub lambda: f64,
    /// `sup_x |F_t(x, 0)_1 - sigma x|`.
    pub a: f64,
    /// `sup_{x, y} |F_t(x, y)_1 - sigma x|`.
    pub b: f64,
    /// `sup_{x, y} |F_t(x, y) - (sigma x, lambda y)|`.
    pub linear: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartTypeReport {
    pub claimed: ChartKind,
    pub threshold: f64,
    pub pass: bool,
    pub edges: Vec<EdgeResiduals>,
}

/// Residuals of the type conditions on a `grid x grid` sample of each chart,
/// restricted to points whose image lies in the target chart.
pub fn verify_chart_type(sys: &ChartSystem, claimed: ChartKind, grid: usize, threshold: f64) -> ChartTypeReport {
    let k = sys.stages.len();
    let mut edges = Vec::new();
    for t in 0..sys.graph.edges.len() {
        let [a, b] = sys.edge(t);
        let ca = &sys.charts[a];
        let sigma = sys.sigma[t].or_else(|| sys.unstable_slope(k, t)).unwrap_or(f64::NAN);
        let lambda = sys.lambda[t].or_else(|| sys.fiber_slope(k, t, 0.0)).unwrap_or(f64::NAN);
        let (mut ra, mut rb, mut rl, mut n): (f64, f64, f64, usize) = (0.0, 0.0, 0.0, 0);
        let xs = linspace(ca.iu[0], ca.iu[1], grid);
        let mut ys = linspace(ca.is[0], ca.is[1], grid);
        ys.push(0.0);
        for &x in &xs {
            for &y in &ys {
                let Some(img) = sys.transition(t, [x, y]) else { continue };
                if !sys.contains(b, img) {
                    continue;
                }
                n += 1;
                let e1 = (img[0] - sigma * x).abs();
                let e2 = (img[1] - lambda * y).abs();
                if y == 0.0 {
                    ra = ra.max(e1);
                }
                rb = rb.max(e1);
                rl = rl.max(e1.max(e2));
            }
        }
        edges.push(EdgeResiduals { edge: t, sigma, lambda, a: ra, b: rb, linear: rl, samples: n });
    }
    let pass = edges.iter().all(|e| {
        e.samples > 0
            && match claimed {
                ChartKind::Raw => true,
                ChartKind::A => e.a <= threshold,
                ChartKind::B => e.a <= threshold && e.b <= threshold,
                ChartKind::Linear => e.linear <= threshold,
            }
    });
    ChartTypeReport { claimed, threshold, pass, edges }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_system() -> ChartSystem {
        let m = [Poly3::monomial(1, 0, 0, 2.0), Poly3::monomial(0, 1, 0, 0.5)];
        ChartSystem::synthetic(ChartGraph::cycle(1), vec![[-0.5, 0.5]], vec![[-0.5, 0.5]], vec![m]).unwrap()
    }

    #[test]
    fn graph_degree_enforced() {
        assert!(ChartGraph::new(3, vec![[0, 1], [0, 2]]).is_err());
        assert!(ChartGraph::new(3, vec![[0, 2], [1, 2]]).is_err());
        let g = ChartGraph::cycle(3);
        assert_eq!(g.incoming(0), Some(2));
        assert_eq!(ChartGraph::path(3).incoming(0), None);
    }

    #[test]
    fn linear_map_residuals_vanish() {
        let sys = linear_system();
        let r = verify_chart_type(&sys, ChartKind::Linear, 33, 1e-7);
        assert!(r.pass);
        assert!(r.edges[0].linear < 1e-14);
        assert!(s_conditions(&sys, 17).pass());
    }

    #[test]
    fn warp_is_detected() {
        let sys = linear_system().perturbed(0, 1e-3);
        let r = verify_chart_type(&sys, ChartKind::A, 33, 1e-7);
        assert!(!r.pass);
        assert!(r.edges[0].a >= 1e-4);
    }
}
