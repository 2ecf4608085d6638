//! Renormalization windows of the quadratic family and the Hénon strip scan.

use crate::error::{Error, Result};
use crate::family::PolyMapFamily;
use crate::hyperbolicity::{check_m1, find_periodic_orbit_with, iterate_with_jacobian, quad_preimage};
use crate::{bisect, linspace, Point};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Orbit of `x` under `t -> t^2 + a` for `q` steps with the derivatives
/// `(X, X_x, X_a, X_xx, X_xa)`.
pub fn quad_orbit_derivs(x: f64, a: f64, q: usize) -> [f64; 5] {
    let (mut v, mut vx, mut va, mut vxx, mut vxa) = (x, 1.0, 0.0, 0.0, 0.0);
    for _ in 0..q {
        let nvxx = 2.0 * vx * vx + 2.0 * v * vxx;
        let nvxa = 2.0 * va * vx + 2.0 * v * vxa;
        let nvx = 2.0 * v * vx;
        let nva = 2.0 * v * va + 1.0;
        v = v * v + a;
        vx = nvx;
        va = nva;
        vxx = nvxx;
        vxa = nvxa;
    }
    [v, vx, va, vxx, vxa]
}

pub fn quad_iter(x: f64, a: f64, q: usize) -> f64 {
    (0..q).fold(x, |v, _| v * v + a)
}

fn divisors(p: usize) -> impl Iterator<Item = usize> {
    (1..p).filter(move |d| p % d == 0)
}

/// Parameter at which the critical point is periodic with minimal period `p`.
pub fn superstable_parameter(p: usize, bracket: [f64; 2]) -> Result<f64> {
    if p == 0 {
        return Err(Error::Precondition("period must be at least 1".into()));
    }
    let g = |a: f64| quad_iter(0.0, a, p);
    let mut a = bisect(g, bracket[0], bracket[1], 1e-15)?;
    for _ in 0..5 {
        let [v, _, va, _, _] = quad_orbit_derivs(0.0, a, p);
        if v == 0.0 || va == 0.0 {
            break;
        }
        let next = a - v / va;
        if (next - a).abs() > 1e-10 {
            break;
        }
        a = next;
    }
    let res = g(a).abs();
    if res >= 1e-12 {
        return Err(Error::NoConvergence { what: "superstable parameter".into(), residual: res });
    }
    for d in divisors(p) {
        if quad_iter(0.0, a, d).abs() < 1e-8 {
            return Err(Error::Precondition(format!(
                "critical point has period {d}, not the requested minimal period {p}"
            )));
        }
    }
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BirthKind {
    SaddleNode,
    PeriodDoubling,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub a: f64,
    /// `I_a = [-|beta|, |beta|]`.
    pub beta: f64,
    pub self_maps: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormWindow {
    pub period: usize,
    pub a_left: f64,
    pub a_right: f64,
    pub a_star: f64,
    pub birth: BirthKind,
    /// The birth end is `a_right`; the breakdown end is `a_left`.
    pub birth_point: f64,
    pub degenerate: bool,
    pub samples: Vec<WindowSample>,
}

impl RenormWindow {
    pub fn width(&self) -> f64 {
        self.a_right - self.a_left
    }

    pub fn contains(&self, a: f64) -> bool {
        a >= self.a_left && a <= self.a_right
    }
}

/// Fixed points of `P_a^p` on `[-2.1, 2.1]` with their multipliers.
pub fn periodic_points(a: f64, p: usize) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for s in linspace(-2.1, 2.1, 401) {
        let mut x = s;
        let mut ok = false;
        for _ in 0..60 {
            let [v, vx, ..] = quad_orbit_derivs(x, a, p);
            let d = vx - 1.0;
            if d == 0.0 || !v.is_finite() {
                break;
            }
            let step = (v - x) / d;
            x -= step;
            if !x.is_finite() || x.abs() > 3.0 {
                break;
            }
            if step.abs() < 1e-14 {
                ok = true;
                break;
            }
        }
        if ok && (quad_iter(x, a, p) - x).abs() < 1e-11 && !out.iter().any(|(y, _)| (y - x).abs() < 1e-9) {
            out.push((x, quad_orbit_derivs(x, a, p)[1]));
        }
    }
    out.sort_by(|u, v| u.0.total_cmp(&v.0));
    out
}

/// Repelling, orientation-preserving fixed point of `P_a^p` closest to 0:
/// the boundary of the renormalization interval.
pub fn boundary_point(a: f64, p: usize) -> Option<f64> {
    periodic_points(a, p)
        .into_iter()
        .filter(|&(_, m)| m > 1.0 + 1e-9)
        .min_by(|u, v| u.0.abs().total_cmp(&v.0.abs()))
        .map(|(x, _)| x)
}

/// Exact image of `[lo, hi]` under `x^2 + a`.
pub fn quad_image(a: f64, lo: f64, hi: f64) -> (f64, f64) {
    let (l2, h2) = (lo * lo, hi * hi);
    if lo <= 0.0 && hi >= 0.0 {
        (a, l2.max(h2) + a)
    } else {
        (l2.min(h2) + a, l2.max(h2) + a)
    }
}

pub fn quad_image_iter(a: f64, lo: f64, hi: f64, k: usize) -> (f64, f64) {
    (0..k).fold((lo, hi), |(l, h), _| quad_image(a, l, h))
}

fn newton_2d(
    mut x: f64,
    mut a: f64,
    q: usize,
    target: f64,
) -> Option<(f64, f64)> {
    for _ in 0..80 {
        let [v, vx, va, vxx, vxa] = quad_orbit_derivs(x, a, q);
        let g1 = v - x;
        let g2 = vx - target;
        let (j11, j12, j21, j22) = (vx - 1.0, va, vxx, vxa);
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let dx = (g1 * j22 - j12 * g2) / det;
        let da = (j11 * g2 - j21 * g1) / det;
        x -= dx;
        a -= da;
        if !x.is_finite() || !a.is_finite() {
            return None;
        }
        if dx.abs() < 1e-15 && da.abs() < 1e-15 {
            break;
        }
    }
    let [v, vx, ..] = quad_orbit_derivs(x, a, q);
    ((v - x).abs() < 1e-12 && (vx - target).abs() < 1e-9).then_some((x, a))
}

/// Birth of the central period-`p` cycle: continuation in `a` upward from
/// the superstable parameter until the multiplier nears 1, then a regular
/// Newton solve for the fold or flip condition.
fn birth_end(p: usize, a_star: f64) -> Result<(f64, BirthKind, f64)> {
    let mut a = a_star;
    let mut x = 0.0;
    let mut step = 1e-3 * 4f64.powi(-(p as i32 - 2).max(0));
    let mut mult = 0.0;
    for _ in 0..20000 {
        let trial = a + step;
        let mut xt = x;
        let mut ok = false;
        for _ in 0..40 {
            let [v, vx, ..] = quad_orbit_derivs(xt, trial, p);
            let d = vx - 1.0;
            if d.abs() < 1e-14 {
                break;
            }
            let s = (v - xt) / d;
            xt -= s;
            if s.abs() < 1e-14 {
                ok = true;
                break;
            }
        }
        let m = if ok { quad_orbit_derivs(xt, trial, p)[1] } else { f64::NAN };
        if !ok || (xt - x).abs() > 0.05 || m > 0.98 {
            if step < 1e-12 {
                break;
            }
            step *= 0.5;
            continue;
        }
        a = trial;
        x = xt;
        mult = m;
        if m > 0.9 {
            break;
        }
    }
    let near = |xb: f64, ab: f64| ab > a_star && ab < a + 10.0 * (a - a_star) && (xb - x).abs() < 0.5;
    if p % 2 == 0 {
        if let Some((xb, ab)) = newton_2d(x, a, p / 2, -1.0) {
            if near(xb, ab) {
                return Ok((ab, BirthKind::PeriodDoubling, xb));
            }
        }
    }
    match newton_2d(x, a, p, 1.0) {
        Some((xb, ab)) if near(xb, ab) => Ok((ab, BirthKind::SaddleNode, xb)),
        _ => Err(Error::NoConvergence {
            what: format!("birth of the period-{p} cycle (continuation stopped at a = {a}, multiplier {mult})"),
            residual: f64::NAN,
        }),
    }
}

fn breakdown_h(a: f64, p: usize) -> f64 {
    match boundary_point(a, p) {
        Some(b) => quad_iter(0.0, a, p).abs() - b.abs(),
        None => f64::NAN,
    }
}

pub fn window_boundaries(p: usize, a_star: f64) -> Result<RenormWindow> {
    if p == 1 {
        return Ok(RenormWindow {
            period: 1,
            a_left: -2.0,
            a_right: 0.25,
            a_star,
            birth: BirthKind::Degenerate,
            birth_point: 0.25,
            degenerate: true,
            samples: vec![],
        });
    }
    let (a_right, birth, _) = birth_end(p, a_star)?;
    let width_guess = a_right - a_star;
    let step = width_guess / 20.0;
    let mut lo = a_star;
    let mut found = None;
    for _ in 0..2000 {
        let next = lo - step;
        let h = breakdown_h(next, p);
        if !h.is_finite() {
            return Err(Error::NoConvergence { what: "renormalization boundary point".into(), residual: f64::NAN });
        }
        if h > 0.0 {
            found = Some((next, lo));
            break;
        }
        lo = next;
    }
    let (l, r) = found.ok_or_else(|| Error::Bracket { lo, hi: a_star })?;
    let a_left = bisect(|a| breakdown_h(a, p), l, r, 1e-14)?;
    let samples = linspace(a_left, a_right, 11)[1..10]
        .iter()
        .map(|&a| {
            let beta = boundary_point(a, p).unwrap_or(f64::NAN).abs();
            let (lo, hi) = quad_image_iter(a, -beta, beta, p);
            WindowSample { a, beta, self_maps: lo >= -beta - 1e-12 && hi <= beta + 1e-12 }
        })
        .collect();
    Ok(RenormWindow {
        period: p,
        a_left,
        a_right,
        a_star,
        birth,
        birth_point: a_right,
        degenerate: false,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSample {
    pub a: f64,
    /// Smallest distance from `P^k(I_a)`, `1 <= k < p`, to `[-C, C]`
    /// (negative when they overlap).
    pub avoidance_gap: f64,
    pub m1_margin: f64,
    pub m1_vacuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowClassReport {
    pub pass: bool,
    pub worst_avoidance_gap: f64,
    pub worst_m1_margin: f64,
    pub samples: Vec<ClassSample>,
}

fn interval_gap_to_center(lo: f64, hi: f64, c: f64) -> f64 {
    if hi < -c {
        -c - hi
    } else if lo > c {
        lo - c
    } else {
        -(hi.min(c) - lo.max(-c))
    }
}

/// Whether the window lies in the class `E_{CΛ}`: orbit avoidance of
/// `[-C, C]` by the images of `I_a`, and expansion away from `[-C, C]`.
pub fn check_window_class(w: &RenormWindow, c: f64, big_lambda: f64, depth: usize) -> Result<WindowClassReport> {
    if w.degenerate {
        return Err(Error::Precondition("degenerate period-1 window".into()));
    }
    let samples: Vec<ClassSample> = linspace(w.a_left, w.a_right, 17)
        .par_iter()
        .map(|&a| {
            let beta = boundary_point(a, w.period).map(f64::abs).unwrap_or(0.0);
            let mut gap = f64::INFINITY;
            let (mut lo, mut hi) = (-beta, beta);
            for _ in 1..w.period {
                (lo, hi) = quad_image(a, lo, hi);
                gap = gap.min(interval_gap_to_center(lo, hi, c));
            }
            let m1 = check_m1(a, c, big_lambda, depth);
            let (margin, vacuous) = match m1 {
                Ok(r) => (r.worst_margin, r.vacuous),
                Err(_) => (f64::NAN, false),
            };
            ClassSample { a, avoidance_gap: gap, m1_margin: margin, m1_vacuous: vacuous }
        })
        .collect();
    let worst_avoidance_gap = samples.iter().map(|s| s.avoidance_gap).fold(f64::INFINITY, f64::min);
    let worst_m1_margin = samples.iter().map(|s| s.m1_margin).fold(f64::INFINITY, f64::min);
    Ok(WindowClassReport {
        pass: worst_avoidance_gap > 0.0 && worst_m1_margin > 1.0,
        worst_avoidance_gap,
        worst_m1_margin,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub left: f64,
    pub right: f64,
}

impl Gap {
    pub fn contains(&self, lo: f64, hi: f64) -> bool {
        lo > self.left && hi < self.right
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSetReport {
    pub a: f64,
    pub c: f64,
    pub depth: usize,
    /// Components of the level-`depth` approximation of `K_C`.
    pub components: Vec<(f64, f64)>,
    pub gaps: Vec<Gap>,
    /// Index into `gaps` of the gap containing `P^k(I_a)`, `k = 0..p`.
    pub chain: Vec<usize>,
    pub chain_images: Vec<(f64, f64)>,
    /// Each chain edge is realized by `P_a`.
    pub edges_realized: bool,
}

/// Approximates `K_C = ∩ P_a^{-n}([-2, 2] \ (-C, C))` by exact interval
/// preimages to `depth` levels and locates the gap chain of the
/// renormalization interval of `period`.
pub fn hyperbolic_gap_set(a: f64, c: f64, depth: usize, period: usize) -> Result<GapSetReport> {
    if !(-2.0..=0.25).contains(&a) {
        return Err(Error::Precondition(format!("a = {a} outside [-2, 1/4]: no bounded dynamics to partition")));
    }
    if !(c > 0.0 && c < 2.0) {
        return Err(Error::Precondition("C must lie in (0, 2)".into()));
    }
    let base = [(-2.0, -c), (c, 2.0)];
    let mut level: Vec<(f64, f64)> = base.to_vec();
    for _ in 1..depth.max(1) {
        let mut next = Vec::new();
        for iv in &level {
            for pre in quad_preimage(a, *iv) {
                for b in &base {
                    let lo = pre.0.max(b.0);
                    let hi = pre.1.min(b.1);
                    if hi > lo {
                        next.push((lo, hi));
                    }
                }
            }
        }
        next.sort_by(|u, v| u.0.total_cmp(&v.0));
        if next.is_empty() {
            level = next;
            break;
        }
        level = next;
    }
    // Merge touching pieces.
    let mut components: Vec<(f64, f64)> = Vec::new();
    for iv in level {
        match components.last_mut() {
            Some(last) if iv.0 <= last.1 + 1e-15 => last.1 = last.1.max(iv.1),
            _ => components.push(iv),
        }
    }
    let mut gaps: Vec<Gap> = components.windows(2).map(|w| Gap { left: w[0].1, right: w[1].0 }).collect();
    if components.is_empty() {
        gaps.push(Gap { left: -2.0, right: 2.0 });
    }
    let beta = boundary_point(a, period).map(f64::abs).ok_or_else(|| {
        Error::Precondition(format!("no renormalization interval of period {period} at a = {a}"))
    })?;
    let mut chain = Vec::new();
    let mut chain_images = Vec::new();
    let (mut lo, mut hi) = (-beta, beta);
    for k in 0..period {
        if k > 0 {
            (lo, hi) = quad_image(a, lo, hi);
        }
        let idx = gaps.iter().position(|g| g.contains(lo, hi)).ok_or_else(|| {
            Error::Invalid(format!("image P^{k}(I_a) = [{lo}, {hi}] straddles the gap set"))
        })?;
        chain.push(idx);
        chain_images.push((lo, hi));
    }
    let edges_realized = (0..period).all(|k| {
        let (l, h) = chain_images[k];
        let (il, ih) = quad_image(a, l, h);
        let target = &gaps[chain[(k + 1) % period]];
        let mid = 0.5 * (l + h);
        let pm = mid * mid + a;
        pm > target.left && pm < target.right && il < target.right && ih > target.left
    });
    Ok(GapSetReport { a, c, depth, components, gaps, chain, chain_images, edges_realized })
}

// ---------------------------------------------------------------------------
// Strip scan for the Hénon family (x^2 + a + y, -b x).

fn henon_orbit(b: f64, a: f64, z: Point, q: usize) -> Point {
    let mut w = z;
    for _ in 0..q {
        w = [w[0] * w[0] + a + w[1], -b * w[0]];
    }
    w
}

fn henon_jac_product(b: f64, a: f64, z: Point, q: usize) -> (Point, [f64; 4]) {
    let mut w = z;
    let mut m = [1.0, 0.0, 0.0, 1.0];
    for _ in 0..q {
        let j = [2.0 * w[0], 1.0, -b, 0.0];
        m = [
            j[0] * m[0] + j[1] * m[2],
            j[0] * m[1] + j[1] * m[3],
            j[2] * m[0] + j[3] * m[2],
            j[2] * m[1] + j[3] * m[3],
        ];
        w = [w[0] * w[0] + a + w[1], -b * w[0]];
    }
    (w, m)
}

fn newton3<F: Fn(Vector3<f64>) -> Vector3<f64>>(f: F, mut u: Vector3<f64>) -> Option<Vector3<f64>> {
    for _ in 0..60 {
        let r = f(u);
        if !r.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut j = Matrix3::zeros();
        for c in 0..3 {
            let h = 1e-7 * (1.0 + u[c].abs());
            let mut up = u;
            let mut um = u;
            up[c] += h;
            um[c] -= h;
            let col = (f(up) - f(um)) / (2.0 * h);
            j.set_column(c, &col);
        }
        let step = j.lu().solve(&r)?;
        u -= step;
        if step.norm() < 1e-14 * (1.0 + u.norm()) {
            break;
        }
    }
    (f(u).norm() < 1e-11).then_some(u)
}

#[derive(Debug, Clone, Copy)]
struct EndpointSystem {
    period: usize,
    kind: EndKind,
    s_crit: f64,
    s_beta: f64,
}

#[derive(Debug, Clone, Copy)]
enum EndKind {
    Fold,
    Flip,
    Breakdown,
}

impl EndpointSystem {
    fn residual(&self, b: f64, u: Vector3<f64>) -> Vector3<f64> {
        let (z, a) = ([u[0], u[1]], u[2]);
        match self.kind {
            EndKind::Fold | EndKind::Flip => {
                let (w, m) = henon_jac_product(b, a, z, self.period);
                let tr = m[0] + m[3];
                let det = m[0] * m[3] - m[1] * m[2];
                let g = match self.kind {
                    EndKind::Fold => 1.0 - tr + det,
                    _ => 1.0 + tr + det,
                };
                Vector3::new(w[0] - z[0], w[1] - z[1], g)
            }
            EndKind::Breakdown => {
                let w = henon_orbit(b, a, z, self.period);
                let c = henon_orbit(b, a, [0.0, 0.0], self.period);
                Vector3::new(w[0] - z[0], w[1] - z[1], self.s_crit * c[0] - self.s_beta * z[0])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripRow {
    pub b: f64,
    pub a_left: f64,
    pub a_right: f64,
    pub nonempty: bool,
    /// Parameter at which the trapping certificate was checked.
    pub a_cert: f64,
    pub h_used: Option<f64>,
    pub eps_used: Option<f64>,
    pub fiber_contraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripScanResult {
    pub period: usize,
    pub rows: Vec<StripRow>,
    pub continuity_defect: f64,
    /// Largest `b` up to which every row is nonempty.
    pub b0: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapCertificate {
    pub h: f64,
    pub eps: f64,
    pub fiber_contraction: f64,
}

/// Searches for a rectangle `[-(beta - eps), beta - eps] x [-h, h]` mapped
/// into its interior by `f^p`, with `sup |d_y (f^p)_2| < 1` on it.
pub fn trapping_certificate(b: f64, a: f64, p: usize, beta: f64, heights: &[f64]) -> Option<TrapCertificate> {
    let j_len = 2.0 * beta;
    for &hf in heights {
        let h = hf * j_len;
        for ef in [0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5] {
            let eps = ef * beta;
            let xr = beta - eps;
            if xr <= 0.0 {
                continue;
            }
            let inside = |w: Point| w[0].abs() < xr && w[1].abs() < h;
            let mut ok = true;
            let mut contraction: f64 = 0.0;
            let nb = 400;
            'outer: for i in 0..=nb {
                let t = -1.0 + 2.0 * i as f64 / nb as f64;
                for z in [[t * xr, -h], [t * xr, h], [-xr, t * h], [xr, t * h]] {
                    if !inside(henon_orbit(b, a, z, p)) {
                        ok = false;
                        break 'outer;
                    }
                }
            }
            if !ok {
                continue;
            }
            for x in linspace(-xr, xr, 41) {
                for y in linspace(-h, h, 41) {
                    let (w, m) = henon_jac_product(b, a, [x, y], p);
                    if !inside(w) {
                        ok = false;
                    }
                    contraction = contraction.max(m[3].abs());
                }
            }
            if ok && contraction < 1.0 {
                return Some(TrapCertificate { h, eps, fiber_contraction: contraction });
            }
        }
    }
    None
}

/// 2D analogue of the superstable parameter: `x(f^p(0, 0)) = 0`.
fn superstable_proxy(b: f64, p: usize, a0: f64) -> Option<f64> {
    let g = |a: f64| henon_orbit(b, a, [0.0, 0.0], p)[0];
    let mut a = a0;
    for _ in 0..60 {
        let h = 1e-8;
        let d = (g(a + h) - g(a - h)) / (2.0 * h);
        if d == 0.0 {
            return None;
        }
        let s = g(a) / d;
        a -= s;
        if s.abs() < 1e-15 {
            break;
        }
    }
    (g(a).abs() < 1e-10).then_some(a)
}

pub struct StripOptions {
    pub b_max: f64,
    pub b_steps: usize,
    pub heights: Vec<f64>,
}

impl Default for StripOptions {
    fn default() -> Self {
        Self { b_max: 0.05, b_steps: 21, heights: vec![0.01, 0.02, 0.05, 0.1] }
    }
}

pub fn strip_scan(w: &RenormWindow, opts: &StripOptions) -> Result<StripScanResult> {
    if w.degenerate {
        return Err(Error::Precondition("degenerate window".into()));
    }
    if !(opts.b_max > 0.0 && opts.b_max <= 0.25) {
        return Err(Error::Precondition("b_max must lie in (0, 0.25]".into()));
    }
    let p = w.period;
    let bs = linspace(0.0, opts.b_max, opts.b_steps.max(2));

    // Seeds from the one-dimensional window at b = 0.
    let (birth_sys, birth_q, birth_seed) = {
        let (a_birth, kind, xb) = birth_end(p, w.a_star)?;
        let (k, q) = match kind {
            BirthKind::PeriodDoubling => (EndKind::Flip, p / 2),
            _ => (EndKind::Fold, p),
        };
        (
            EndpointSystem { period: q, kind: k, s_crit: 1.0, s_beta: 1.0 },
            q,
            Vector3::new(xb, 0.0, a_birth),
        )
    };
    let _ = birth_q;
    let beta0 = boundary_point(w.a_left, p)
        .ok_or_else(|| Error::Precondition("no boundary point at the breakdown parameter".into()))?;
    let crit0 = quad_iter(0.0, w.a_left, p);
    let break_sys = EndpointSystem {
        period: p,
        kind: EndKind::Breakdown,
        s_crit: crit0.signum(),
        s_beta: beta0.signum(),
    };
    let mut seeds = (birth_seed, Vector3::new(beta0, 0.0, w.a_left));

    let mut endpoints = Vec::with_capacity(bs.len());
    for &b in &bs {
        let right = newton3(|u| birth_sys.residual(b, u), seeds.0);
        let left = newton3(|u| break_sys.residual(b, u), seeds.1);
        if let Some(r) = right {
            seeds.0 = r;
        }
        if let Some(l) = left {
            seeds.1 = l;
        }
        endpoints.push((left, right));
    }

    let rows: Vec<StripRow> = bs
        .par_iter()
        .zip(endpoints.par_iter())
        .map(|(&b, &(left, right))| {
            let (a_left, a_right) = (
                left.map(|u| u[2]).unwrap_or(f64::NAN),
                right.map(|u| u[2]).unwrap_or(f64::NAN),
            );
            let mut row = StripRow {
                b,
                a_left,
                a_right,
                nonempty: false,
                a_cert: f64::NAN,
                h_used: None,
                eps_used: None,
                fiber_contraction: f64::NAN,
            };
            if !(a_left < a_right) {
                return row;
            }
            let Some(a_c) = superstable_proxy(b, p, w.a_star).filter(|a| *a > a_left && *a < a_right) else {
                return row;
            };
            row.a_cert = a_c;
            let fam = PolyMapFamily::henon(b).jacobian_field();
            let seed = boundary_point(a_c, p).map(|x| [x, -b * x]).unwrap_or([beta0, 0.0]);
            let Ok(sad) = find_periodic_orbit_with(&fam, a_c, p, seed) else {
                return row;
            };
            if let Some(cert) = trapping_certificate(b, a_c, p, sad.point[0].abs(), &opts.heights) {
                row.nonempty = true;
                row.h_used = Some(cert.h);
                row.eps_used = Some(cert.eps);
                row.fiber_contraction = cert.fiber_contraction;
            }
            row
        })
        .collect();

    let mut defect: f64 = 0.0;
    for pair in rows.windows(2) {
        if pair[0].nonempty && pair[1].nonempty {
            defect = defect
                .max((pair[1].a_left - pair[0].a_left).abs())
                .max((pair[1].a_right - pair[0].a_right).abs());
        }
    }
    let first_bad = rows.iter().position(|r| !r.nonempty);
    let (b0, truncated) = match first_bad {
        None => (opts.b_max, false),
        Some(0) => (f64::NAN, true),
        Some(i) => (rows[i - 1].b, true),
    };
    Ok(StripScanResult { period: p, rows, continuity_defect: defect, b0, truncated })
}

/// Helper for reports: the 2D fixed-point residual of `f^q` at `z`.
pub fn henon_periodic_residual(b: f64, a: f64, z: Point, q: usize) -> f64 {
    let w = henon_orbit(b, a, z, q);
    ((w[0] - z[0]).powi(2) + (w[1] - z[1]).powi(2)).sqrt()
}

pub fn jacobian_product(b: f64, a: f64, z: Point, q: usize) -> [f64; 4] {
    let fam = PolyMapFamily::henon(b).jacobian_field();
    let (_, m) = iterate_with_jacobian(&fam, z, a, q);
    [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
}
