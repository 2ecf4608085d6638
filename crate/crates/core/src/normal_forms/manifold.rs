//! Local unstable manifolds and chart systems built along periodic orbits
//! and gap chains.

use super::{s_conditions, BaseChart, Chart, ChartGraph, ChartKind, ChartSystem, SConditions, Transitions};
use crate::cheb::ChebFn;
use crate::error::{Error, Result};
use crate::family::PolyMapFamily;
use crate::hyperbolicity::{find_periodic_orbit, EigenData};
use crate::poly::series;
use crate::windows::{hyperbolic_gap_set, GapSetReport};
use crate::{linspace, Mat2, Point};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstableSegment {
    pub point: Point,
    pub period: usize,
    pub sigma: f64,
    pub eps: f64,
    /// Arc-length parametrization on `[-eps, eps]`.
    pub curve: [ChebFn; 2],
    /// Power series `K(s)` with `f^p(K(s)) = K(sigma s)`.
    pub series: [Vec<f64>; 2],
    pub s_max: f64,
    /// `sup |f^p(gamma(t)) - gamma(tau(t))|` where both sides are defined.
    pub invariance_residual: f64,
    /// `sup | |gamma'| - 1 |`.
    pub speed_defect: f64,
}

/// Coefficients of `g(K(s))` up to order `n`, for `g` with frozen parameter.
fn compose_series(g: &PolyMapFamily, k: &[Vec<f64>; 2], n: usize) -> [Vec<f64>; 2] {
    let [dx, dy, _] = [
        g.coords[0].degs()[0].max(g.coords[1].degs()[0]),
        g.coords[0].degs()[1].max(g.coords[1].degs()[1]),
        0,
    ];
    let mut px = vec![{
        let mut one = vec![0.0; n + 1];
        one[0] = 1.0;
        one
    }];
    for i in 1..=dx {
        px.push(series::mul(&px[i - 1], &k[0], n + 1));
    }
    let mut py = vec![px[0].clone()];
    for j in 1..=dy {
        py.push(series::mul(&py[j - 1], &k[1], n + 1));
    }
    let mut out = [vec![0.0; n + 1], vec![0.0; n + 1]];
    for (c, o) in out.iter_mut().enumerate() {
        for (i, j, kk, coef) in g.coords[c].terms() {
            if kk != 0 || coef == 0.0 {
                continue;
            }
            let m = series::mul(&px[i], &py[j], n + 1);
            for (oo, mm) in o.iter_mut().zip(&m) {
                *oo += coef * mm;
            }
        }
    }
    out
}

/// Local unstable manifold of a periodic saddle by the parametrization
/// method, reparametrized by arc length on `[-eps, eps]`.
pub fn unstable_segment(
    family: &PolyMapFamily,
    mu: f64,
    eigen: &EigenData,
    eps: f64,
    degree: usize,
) -> Result<UnstableSegment> {
    if eigen.complex || !eigen.saddle {
        return Err(Error::Precondition("periodic point is not a saddle".into()));
    }
    let sigma = eigen.sigma;
    if (sigma.abs() - 1.0).abs() < 1e-12 {
        return Err(Error::Precondition("resonant unstable eigenvalue |sigma| = 1".into()));
    }
    let p = eigen.period;
    let g = family.at_param(mu).iterate(p);
    let z = eigen.point;
    let dg: Mat2 = g.jac(z, 0.0);
    let order = degree.max(8);
    let mut k = [vec![0.0; order + 1], vec![0.0; order + 1]];
    k[0][0] = z[0];
    k[1][0] = z[1];
    let u = Vector2::new(eigen.unstable_dir[0], eigen.unstable_dir[1]).normalize();
    k[0][1] = u[0];
    k[1][1] = u[1];
    for n in 2..=order {
        let r = compose_series(&g, &k, n);
        let m = Mat2::identity() * sigma.powi(n as i32) - dg;
        let sol = m
            .lu()
            .solve(&Vector2::new(r[0][n], r[1][n]))
            .ok_or_else(|| Error::Precondition(format!("resonance at order {n}")))?;
        k[0][n] = sol[0];
        k[1][n] = sol[1];
    }
    // Radius on which the truncated tail is below roundoff.
    let mut s_max: f64 = 10.0;
    for n in order.saturating_sub(4)..=order {
        let c = k[0][n].hypot(k[1][n]);
        if c > 0.0 {
            s_max = s_max.min((1e-16 / c).powf(1.0 / n as f64));
        }
    }
    let speed = |s: f64| series::deriv_eval(&k[0], s).hypot(series::deriv_eval(&k[1], s));
    let coarse = ChebFn::fit(speed, [-s_max, s_max], 64).integral(0.0);
    let reach = coarse.eval(s_max).min(-coarse.eval(-s_max));
    if !(eps < reach) {
        return Err(Error::Precondition(format!(
            "eps = {eps} exceeds the arc length {reach:.4} on which the series converges"
        )));
    }
    // Refit on the parameter range actually needed, with the image of the
    // segment under sigma included where the series allows it.
    let need = |target: f64| {
        let t = target.clamp(-0.999 * reach, 0.999 * reach);
        crate::bisect(|s| coarse.eval(s) - t, -s_max, s_max, 1e-14).unwrap_or(s_max.copysign(t))
    };
    let lo = need(-1.1 * eps);
    let hi = need(1.1 * eps);
    let span = (sigma.abs() * lo.abs().max(hi)).min(s_max);
    let arc = ChebFn::fit(speed, [-span, span], 64).integral(0.0);
    let s_of_t = |t: f64| -> Option<f64> {
        let mut s = t;
        for _ in 0..60 {
            let r = arc.eval(s) - t;
            let step = r / speed(s);
            s -= step;
            if step.abs() < 1e-16 * (1.0 + s.abs()) {
                break;
            }
        }
        ((arc.eval(s) - t).abs() < 1e-13).then_some(s)
    };
    let nodes = crate::cheb::nodes([-eps, eps], degree + 1);
    let mut vx = Vec::with_capacity(nodes.len());
    let mut vy = Vec::with_capacity(nodes.len());
    for &t in &nodes {
        let s = s_of_t(t).ok_or_else(|| Error::NoConvergence { what: "arc-length inversion".into(), residual: t })?;
        vx.push(series::eval(&k[0], s));
        vy.push(series::eval(&k[1], s));
    }
    let curve = [ChebFn::from_node_values([-eps, eps], &vx), ChebFn::from_node_values([-eps, eps], &vy)];
    if curve.iter().any(|c| c.under_resolved()) {
        return Err(Error::Precondition("unstable segment under-resolved; reduce eps".into()));
    }
    let d = [curve[0].deriv(), curve[1].deriv()];
    let mut invariance_residual: f64 = 0.0;
    let mut speed_defect: f64 = 0.0;
    for &t in &linspace(-eps, eps, 201) {
        speed_defect = speed_defect.max((d[0].eval(t).hypot(d[1].eval(t)) - 1.0).abs());
        let Some(s) = s_of_t(t) else { continue };
        let tau = arc.eval(sigma * s);
        if tau.abs() > eps {
            continue;
        }
        let w = g.eval([curve[0].eval(t), curve[1].eval(t)], 0.0);
        let e = (w[0] - curve[0].eval(tau)).hypot(w[1] - curve[1].eval(tau));
        invariance_residual = invariance_residual.max(e);
    }
    Ok(UnstableSegment {
        point: z,
        period: p,
        sigma,
        eps,
        curve,
        series: k,
        s_max,
        invariance_residual,
        speed_defect,
    })
}

/// Charts along a periodic saddle orbit: unstable segments of size `eps`
/// with straight plaques in the stable direction, on a cyclic graph.
pub fn build_chart_system(
    family: &PolyMapFamily,
    mu: f64,
    orbit: &EigenData,
    eps: f64,
) -> Result<(ChartSystem, SConditions)> {
    let p = orbit.minimal_period;
    let mut charts = Vec::with_capacity(p);
    let mut z = orbit.point;
    for _ in 0..p {
        let e = find_periodic_orbit(family, mu, p, z)?;
        let seg = unstable_segment(family, mu, &e, 1.25 * eps, 40)?;
        charts.push(Chart {
            iu: [-eps, eps],
            is: [-eps, eps],
            base: BaseChart::Plaque { gamma: seg.curve, v: e.stable_dir },
            cone_half_width: FRAC_PI_4,
        });
        z = family.eval(e.point, mu);
    }
    let sys = ChartSystem {
        graph: ChartGraph::cycle(p),
        charts,
        transitions: Transitions::Map { family: family.clone(), mu },
        stages: Vec::new(),
        kind: ChartKind::Raw,
        sigma: vec![None; p],
        lambda: vec![None; p],
    };
    let s = s_conditions(&sys, 17);
    if let Some((t, y)) = s.s3_offending {
        return Err(Error::ChartCondition(format!("(S3) single crossing fails on edge {t}, fiber y = {y}")));
    }
    Ok((sys, s))
}

/// One-dimensional charts on the gaps of the quadratic family that contain
/// `P_a^k(I_a)`, `k = 0..period`, joined in a path.
pub fn gap_chain_system(a: f64, c: f64, depth: usize, period: usize) -> Result<(ChartSystem, GapSetReport)> {
    let rep = hyperbolic_gap_set(a, c, depth, period)?;
    let n = period.min(rep.chain.len());
    let mut charts = Vec::new();
    for &gi in rep.chain.iter().take(n) {
        let g = &rep.gaps[gi];
        let m = 0.5 * (g.left + g.right);
        charts.push(Chart {
            iu: [g.left - m, g.right - m],
            is: [-1.0, 1.0],
            base: BaseChart::Affine { origin: [m, 0.0], ex: [1.0, 0.0], ey: [0.0, 1.0] },
            cone_half_width: FRAC_PI_4,
        });
    }
    let sys = ChartSystem {
        graph: ChartGraph::path(n),
        charts,
        transitions: Transitions::Map { family: PolyMapFamily::quadratic(), mu: a },
        stages: Vec::new(),
        kind: ChartKind::Raw,
        sigma: vec![None; n.saturating_sub(1)],
        lambda: vec![None; n.saturating_sub(1)],
    };
    Ok((sys, rep))
}
