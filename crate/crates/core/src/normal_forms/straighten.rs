//! Type A: linearizing the dynamics along the unstable direction.

use super::{invert_monotone, ChartKind, ChartSystem, Stage, VertexChange};
use crate::cheb::{nodes, ChebFn};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct StraightenOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub degree: usize,
    /// Relative collar added to each unstable interval.
    pub collar: f64,
    /// Starting guesses; each must satisfy `phi(0) = 0`, `phi'(0) = 1`.
    pub initial: Option<Vec<ChebFn>>,
}

impl Default for StraightenOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 200, degree: 48, collar: 0.1, initial: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StraightenReport {
    pub iterations: usize,
    pub final_difference: f64,
    pub sigma: Vec<f64>,
    pub phis: Vec<ChebFn>,
}

/// Enforces `phi(0) = 0` and `phi'(0) = 1`; interpolation error in these
/// modes is otherwise amplified by the operator.
fn normalized(mut phi: ChebFn) -> ChebFn {
    let d = phi.deriv().eval(0.0);
    let c = phi.eval(0.0);
    phi.coeffs[0] -= c;
    phi.coeffs.iter_mut().for_each(|v| *v /= d);
    phi
}

fn extended(iv: [f64; 2], collar: f64) -> [f64; 2] {
    let w = collar * (iv[1] - iv[0]);
    [iv[0] - w, iv[1] + w]
}

/// Shrinks the collared domains until each one lies in the image of its
/// predecessor, so that every node has a preimage where `phi` is defined.
fn consistent_domains(sys: &ChartSystem, k: usize, ext: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    let mut doms = ext.to_vec();
    for _ in 0..100 {
        let mut changed = false;
        for (t, e) in sys.graph.edges.iter().enumerate() {
            let [a, b] = *e;
            let img = |x: f64| sys.transition_at(k, t, [x, 0.0]).map(|p| p[0]);
            let (u, v) = (img(doms[a][0]), img(doms[a][1]));
            let mut d = doms[b];
            if let (Some(u), Some(v)) = (u, v) {
                d = [d[0].max(u.min(v)), d[1].min(u.max(v))];
            }
            if d != doms[b] {
                doms[b] = d;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for (v, (d, c)) in doms.iter().zip(&sys.charts).enumerate() {
        if !(d[0] < c.iu[0] && c.iu[1] < d[1]) {
            return Err(Error::Precondition(format!(
                "image of the unstable interval does not cover vertex {v}: {d:?} vs {:?}",
                c.iu
            )));
        }
    }
    Ok(doms)
}

/// Solves `phi_b(f_t(x)) = sigma_t phi_a(x)` for all edges `t: a -> b` by
/// Picard iteration `phi_b <- sigma_t phi_a ∘ f_t^{-1}`, then reparametrizes
/// the unstable coordinate of each chart by `phi`.
pub fn straighten_unstable(sys: &ChartSystem, opts: &StraightenOptions) -> Result<(ChartSystem, StraightenReport)> {
    let k = sys.stages.len();
    let nv = sys.graph.vertices;
    let ne = sys.graph.edges.len();
    let ext: Vec<[f64; 2]> = sys.charts.iter().map(|c| extended(c.iu, opts.collar)).collect();
    let doms = consistent_domains(sys, k, &ext)?;
    let mut sigma = vec![0.0; ne];
    for (t, s) in sigma.iter_mut().enumerate() {
        *s = sys
            .unstable_slope(k, t)
            .ok_or_else(|| Error::Precondition(format!("transition {t} not defined along the unstable axis")))?;
        if s.abs() <= 1.0 {
            return Err(Error::Precondition(format!("edge {t} is not expanding: slope {s}")));
        }
    }
    // Preimages of the Chebyshev nodes of each target under its edge map.
    let xs: Vec<Vec<f64>> = doms.iter().map(|d| nodes(*d, opts.degree + 1)).collect();
    let mut pre: Vec<Option<(usize, f64, Vec<f64>)>> = vec![None; nv];
    for b in 0..nv {
        let Some(t) = sys.graph.incoming(b) else { continue };
        let a = sys.edge(t)[0];
        let f = |x: f64| sys.transition_at(k, t, [x, 0.0]).map(|p| p[0]).unwrap_or(f64::NAN);
        let mut pts = Vec::with_capacity(xs[b].len());
        for &x in &xs[b] {
            let p = invert_monotone(f, x, x / sigma[t])
                .filter(|p| *p >= doms[a][0] - 1e-12 && *p <= doms[a][1] + 1e-12)
                .ok_or_else(|| {
                    Error::Precondition(format!("preimage of x = {x} under edge {t} leaves the chart of vertex {a}"))
                })?;
            pts.push(p);
        }
        pre[b] = Some((a, sigma[t], pts));
    }
    let mut phis: Vec<ChebFn> = match &opts.initial {
        Some(init) if init.len() == nv => init
            .iter()
            .zip(&doms)
            .map(|(f, d)| normalized(ChebFn::fit(|x| f.eval(x), *d, opts.degree)))
            .collect(),
        Some(_) => return Err(Error::Invalid("initial guess count differs from the vertex count".into())),
        None => doms.iter().map(|d| ChebFn::identity(*d)).collect(),
    };
    let mut prev_diff = f64::INFINITY;
    let mut growth = 0;
    let mut iterations = 0;
    let mut diff = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        let next: Vec<ChebFn> = (0..nv)
            .map(|b| match &pre[b] {
                Some((a, s, pts)) => {
                    let vals: Vec<f64> = pts.iter().map(|&p| s * phis[*a].eval(p)).collect();
                    normalized(ChebFn::from_node_values(doms[b], &vals))
                }
                None => ChebFn::identity(doms[b]),
            })
            .collect();
        diff = next.iter().zip(&phis).map(|(n, o)| n.distance(o)).fold(0.0, f64::max);
        phis = next;
        if diff < opts.tol {
            break;
        }
        if diff > prev_diff {
            growth += 1;
            if growth >= 3 {
                return Err(Error::HyperbolicityInsufficient(format!(
                    "unstable straightening diverges (difference {diff:.3e} after {iterations} iterations)"
                )));
            }
        } else {
            growth = 0;
        }
        prev_diff = diff;
    }
    if diff >= opts.tol {
        return Err(Error::NoConvergence { what: "unstable straightening".into(), residual: diff });
    }
    let mut out = sys.clone();
    for (c, phi) in out.charts.iter_mut().zip(&phis) {
        c.iu = [phi.eval(c.iu[0]), phi.eval(c.iu[1])];
    }
    out.stages.push(Stage {
        name: "unstable".into(),
        changes: phis.iter().cloned().map(VertexChange::Unstable).collect(),
        fiber: None,
    });
    out.kind = out.kind.max(ChartKind::A);
    out.sigma = sigma.iter().map(|&s| Some(s)).collect();
    Ok((out, StraightenReport { iterations, final_difference: diff, sigma, phis }))
}
