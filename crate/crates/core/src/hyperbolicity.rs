//! Periodic orbits, eigendata and sampled hyperbolicity certificates.

use crate::cone::{direction_angle, ConeField};
use crate::error::{Error, Result};
use crate::family::{in_box, JacobianField, PolyMapFamily, SAFETY_BOX};
use crate::{linspace, Mat2, Point};
use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenData {
    pub point: Point,
    pub orbit: Vec<Point>,
    pub period: usize,
    pub minimal_period: usize,
    /// Eigenvalue of smaller modulus (real part when complex).
    pub lambda: f64,
    /// Eigenvalue of larger modulus (real part when complex).
    pub sigma: f64,
    pub complex: bool,
    pub stable_dir: Point,
    pub unstable_dir: Point,
    pub saddle: bool,
    pub det: f64,
    pub trace: f64,
    pub residual: f64,
}

/// `f^p(z)` and `D f^p(z)` by forward iteration.
pub fn iterate_with_jacobian(jf: &JacobianField, z: Point, mu: f64, p: usize) -> (Point, Mat2) {
    let mut w = z;
    let mut m = Mat2::identity();
    for _ in 0..p {
        m = jf.jac(w, mu) * m;
        w = jf.eval(w, mu);
    }
    (w, m)
}

fn eig_dir(m: &Mat2, ev: f64) -> Point {
    let a = m - Mat2::identity() * ev;
    // Null vector: pick the larger row for stability.
    let (r0, r1) = (a.row(0), a.row(1));
    let row = if r0.norm() >= r1.norm() { r0 } else { r1 };
    let v = if row.norm() == 0.0 {
        Vector2::new(1.0, 0.0)
    } else {
        Vector2::new(-row[1], row[0]).normalize()
    };
    [v[0], v[1]]
}

/// Eigen decomposition of a 2x2 cocycle.
pub fn eigen_of(m: &Mat2) -> (f64, f64, bool, Point, Point) {
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr / 4.0 - det;
    if disc < 0.0 {
        let re = tr / 2.0;
        return (re, re, true, [1.0, 0.0], [1.0, 0.0]);
    }
    let s = disc.sqrt();
    let (e1, e2) = (tr / 2.0 + s, tr / 2.0 - s);
    // Stable root from the product to avoid cancellation.
    let (big, small) = if e1.abs() >= e2.abs() { (e1, e2) } else { (e2, e1) };
    let small = if big != 0.0 { det / big } else { small };
    (small, big, false, eig_dir(m, small), eig_dir(m, big))
}

pub fn find_periodic_orbit(family: &PolyMapFamily, mu: f64, p: usize, seed: Point) -> Result<EigenData> {
    find_periodic_orbit_with(&family.jacobian_field(), mu, p, seed)
}

pub fn find_periodic_orbit_with(jf: &JacobianField, mu: f64, p: usize, seed: Point) -> Result<EigenData> {
    if p == 0 {
        return Err(Error::Precondition("period must be at least 1".into()));
    }
    let mut z = seed;
    let mut res = f64::INFINITY;
    for _ in 0..50 {
        let (w, m) = iterate_with_jacobian(jf, z, mu, p);
        let f = Vector2::new(w[0] - z[0], w[1] - z[1]);
        res = f.norm();
        if !res.is_finite() {
            break;
        }
        let j = m - Mat2::identity();
        let Some(step) = j.lu().solve(&f) else { break };
        // Backtrack while the residual does not decrease.
        let mut t = 1.0;
        let mut next = [z[0] - step[0], z[1] - step[1]];
        for _ in 0..30 {
            let (w, _) = iterate_with_jacobian(jf, next, mu, p);
            let r = ((w[0] - next[0]).powi(2) + (w[1] - next[1]).powi(2)).sqrt();
            if r.is_finite() && in_box(next, &SAFETY_BOX) && r < res {
                break;
            }
            t *= 0.5;
            next = [z[0] - t * step[0], z[1] - t * step[1]];
        }
        z = next;
        if !in_box(z, &SAFETY_BOX) {
            break;
        }
        let step = step * t;
        if step.norm() < 1e-12 * (1.0 + z[0].abs() + z[1].abs()) {
            let (w, _) = iterate_with_jacobian(jf, z, mu, p);
            res = ((w[0] - z[0]).powi(2) + (w[1] - z[1]).powi(2)).sqrt();
            break;
        }
    }
    if !(res < 1e-10) {
        return Err(Error::NoConvergence { what: format!("Newton for period {p}"), residual: res });
    }
    let (_, m) = iterate_with_jacobian(jf, z, mu, p);
    let mut minimal_period = p;
    for d in 1..p {
        if p % d == 0 {
            let (w, _) = iterate_with_jacobian(jf, z, mu, d);
            if ((w[0] - z[0]).powi(2) + (w[1] - z[1]).powi(2)).sqrt() < 1e-8 {
                minimal_period = d;
                break;
            }
        }
    }
    let mut orbit = vec![z];
    for _ in 1..p {
        let last = *orbit.last().unwrap();
        orbit.push(jf.eval(last, mu));
    }
    let (lambda, sigma, complex, stable_dir, unstable_dir) = eigen_of(&m);
    Ok(EigenData {
        point: z,
        orbit,
        period: p,
        minimal_period,
        lambda,
        sigma,
        complex,
        stable_dir,
        unstable_dir,
        saddle: !complex && lambda.abs() < 1.0 && sigma.abs() > 1.0,
        det: m.determinant(),
        trace: m.trace(),
        residual: res,
    })
}

/// Newton from a `grid x grid` seed mesh of `domain`; duplicates within
/// `1e-8` are merged.
pub fn find_periodic_orbits_grid(
    family: &PolyMapFamily,
    mu: f64,
    p: usize,
    domain: [f64; 4],
    grid: usize,
) -> Vec<EigenData> {
    let jf = family.jacobian_field();
    let xs = linspace(domain[0], domain[1], grid);
    let ys = linspace(domain[2], domain[3], grid);
    let seeds: Vec<Point> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| [x, y])).collect();
    let found: Vec<EigenData> = seeds
        .par_iter()
        .filter_map(|&s| find_periodic_orbit_with(&jf, mu, p, s).ok())
        .collect();
    let mut out: Vec<EigenData> = Vec::new();
    for e in found {
        if !in_box(e.point, &domain) {
            continue;
        }
        let dup = out.iter().any(|o| {
            ((o.point[0] - e.point[0]).powi(2) + (o.point[1] - e.point[1]).powi(2)).sqrt() < 1e-8
        });
        if !dup {
            out.push(e);
        }
    }
    out.sort_by(|a, b| a.point[0].total_cmp(&b.point[0]).then(a.point[1].total_cmp(&b.point[1])));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RReport {
    pub pass: bool,
    pub ordered: bool,
    pub dissipative: bool,
    pub margin: f64,
    pub worst: [usize; 2],
}

/// Eigenvalue ordering, dissipation and non-resonance up to order `m`.
pub fn check_r(lambda: f64, sigma: f64, m: usize, tol: f64) -> Result<RReport> {
    if m < 2 {
        return Err(Error::Precondition("resonance order must be at least 2".into()));
    }
    let ordered = 0.0 < lambda && lambda < 1.0 && 1.0 < sigma;
    let dissipative = lambda * sigma < 1.0;
    let mut margin = f64::INFINITY;
    let mut worst = [0, 0];
    for i in 0..=m {
        for j in 0..=(m - i) {
            if i + j == 0 {
                continue;
            }
            let d = (lambda.powi(i as i32) * sigma.powi(j as i32) - 1.0).abs();
            if d < margin {
                margin = d;
                worst = [i, j];
            }
        }
    }
    Ok(RReport { pass: ordered && dissipative && margin > tol, ordered, dissipative, margin, worst })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M1Report {
    pub pass: bool,
    pub vacuous: bool,
    /// `min |D P^k(x)| / (C Λ^k)` over surviving samples.
    pub worst_margin: f64,
    pub witness: Option<(f64, usize)>,
    pub samples: usize,
    pub surviving_intervals: Vec<usize>,
}

type Iv = (f64, f64);

fn intersect(a: Iv, b: Iv) -> Option<Iv> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    (hi > lo).then_some((lo, hi))
}

/// Preimage of `[u, v]` under `x^2 + a`, as up to two intervals.
pub fn quad_preimage(a: f64, iv: Iv) -> Vec<Iv> {
    let lo = (iv.0 - a).max(0.0);
    let hi = iv.1 - a;
    if hi <= lo {
        return vec![];
    }
    let (s, t) = (lo.sqrt(), hi.sqrt());
    if s == 0.0 {
        vec![(-t, t)]
    } else {
        vec![(-t, -s), (s, t)]
    }
}

/// Expansion on the set of points whose first `k` iterates stay in
/// `[-2, -C] ∪ [C, 2]`, for `k = 1..=depth`.
pub fn check_m1(a: f64, c: f64, big_lambda: f64, depth: usize) -> Result<M1Report> {
    if !(-2.0..=0.25).contains(&a) {
        return Err(Error::Precondition(format!("a = {a} outside [-2, 1/4]")));
    }
    if depth == 0 || depth > 20 {
        return Err(Error::Precondition("depth must be in 1..=20".into()));
    }
    let base: Vec<Iv> = [(-2.0, -c), (c, 2.0)].into_iter().filter(|iv| iv.1 > iv.0).collect();
    let mut level = base.clone();
    let mut worst = f64::INFINITY;
    let mut witness = None;
    let mut samples = 0;
    let mut surviving = Vec::new();
    let mut vacuous = false;
    for k in 1..=depth {
        if k > 1 {
            // S_k = S_0 ∩ P^{-1}(S_{k-1}).
            let mut next = Vec::new();
            for iv in &level {
                for pre in quad_preimage(a, *iv) {
                    for b in &base {
                        if let Some(x) = intersect(pre, *b) {
                            next.push(x);
                        }
                    }
                }
            }
            next.sort_by(|u, v| u.0.total_cmp(&v.0));
            level = next;
        }
        surviving.push(level.len());
        if level.is_empty() {
            vacuous = true;
            break;
        }
        let req = c * big_lambda.powi(k as i32);
        for iv in &level {
            let m = (((iv.1 - iv.0) / 1e-4).ceil() as usize).max(2);
            for s in linspace(iv.0, iv.1, m + 1) {
                let mut x = s;
                let mut d = 1.0;
                for _ in 0..k {
                    d *= 2.0 * x;
                    x = x * x + a;
                }
                let r = d.abs() / req;
                samples += 1;
                if r < worst {
                    worst = r;
                    witness = Some((s, k));
                }
            }
        }
    }
    let pass = if vacuous && witness.is_none() { true } else { worst > 1.0 };
    Ok(M1Report {
        pass,
        vacuous,
        worst_margin: if witness.is_none() { f64::INFINITY } else { worst },
        witness,
        samples,
        surviving_intervals: surviving,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagResult {
    pub name: String,
    pub pass: bool,
    pub worst_margin: f64,
    pub witness: Option<Point>,
    pub witness_k: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    /// Every sampled image direction lies inside the target cone.
    pub invariant: bool,
    /// Smallest angular slack of an image direction inside the target cone.
    pub min_gap: f64,
    /// `min_gap >= C`.
    pub gap_at_least_c: bool,
    pub failures: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityCertificate {
    pub c: f64,
    pub big_lambda: f64,
    pub r: usize,
    pub k_max: usize,
    pub tags: Vec<TagResult>,
    pub invariance: InvarianceReport,
    /// `(i, worst margin)` for the exponent family at `(C/2, sqrt Λ)`.
    pub interpolated: Vec<(i32, f64)>,
    /// Margin of the exponent `-2` case at `(C, Λ)`.
    pub endpoint_minus2: f64,
}

impl HyperbolicityCertificate {
    pub fn tag(&self, name: &str) -> Option<&TagResult> {
        self.tags.iter().find(|t| t.name == name)
    }

    pub fn all_pass(&self) -> bool {
        self.tags.iter().all(|t| t.pass)
    }
}

#[derive(Debug, Clone)]
pub struct CertifyOptions {
    pub r: usize,
    pub c: f64,
    pub big_lambda: f64,
    pub k_max: usize,
    pub grid: usize,
    pub interior_directions: usize,
}

struct PointStats {
    m: (f64, usize),
    dr: (f64, usize),
    m2: f64,
    interp: Vec<f64>,
    gap: f64,
    inv_fail: bool,
}

/// Sampled (M) and (D_r) certificate on the region `v`.
pub fn check_m_dr(
    family: &PolyMapFamily,
    mu: f64,
    cone: &ConeField,
    v: [f64; 4],
    opts: &CertifyOptions,
) -> Result<HyperbolicityCertificate> {
    if opts.k_max == 0 || opts.k_max > 40 {
        return Err(Error::Precondition("k_max must be in 1..=40".into()));
    }
    if opts.c <= 0.0 || opts.big_lambda <= 1.0 {
        return Err(Error::Precondition("need C > 0 and Λ > 1".into()));
    }
    let jf = family.jacobian_field();
    let xs = linspace(v[0], v[1], opts.grid);
    let ys = linspace(v[2], v[3], opts.grid);
    let pts: Vec<Point> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| [x, y])).collect();
    let r_exp = opts.r as f64 - 3.0;
    let exps: Vec<i32> = (-2..=(opts.r as i32 - 3)).collect();
    let (lc, ll) = (opts.c.ln(), opts.big_lambda.ln());
    let (lc2, ll2) = ((opts.c / 2.0).ln(), 0.5 * ll);

    let stats: Vec<PointStats> = pts
        .par_iter()
        .map(|&z0| {
            let mut st = PointStats {
                m: (f64::INFINITY, 0),
                dr: (f64::INFINITY, 0),
                m2: f64::INFINITY,
                interp: vec![f64::INFINITY; exps.len()],
                gap: f64::INFINITY,
                inv_fail: false,
            };
            // Invariance at z0.
            let fz = jf.eval(z0, mu);
            if in_box(fz, &v) {
                let j = jf.jac(z0, mu);
                for u in cone.test_directions(z0, opts.interior_directions) {
                    let w = j * Vector2::new(u[0], u[1]);
                    let s = cone.slack(fz, [w[0], w[1]]);
                    st.gap = st.gap.min(s);
                    if s <= 0.0 {
                        st.inv_fail = true;
                    }
                }
            }
            for u in cone.test_directions(z0, opts.interior_directions) {
                let mut z = z0;
                let mut w = Vector2::new(u[0], u[1]);
                let mut log_norm = 0.0;
                let mut log_det = 0.0;
                for k in 1..=opts.k_max {
                    let j = jf.jac(z, mu);
                    w = j * w;
                    let nw = w.norm();
                    log_norm += nw.ln();
                    w /= nw;
                    log_det += j.determinant().abs().ln();
                    z = jf.eval(z, mu);
                    if !in_box(z, &v) {
                        break;
                    }
                    let kf = k as f64;
                    let req = lc + kf * ll;
                    let mm = log_norm - req;
                    if mm < st.m.0 {
                        st.m = (mm, k);
                    }
                    let dr = -(r_exp * log_norm + log_det + req);
                    if dr < st.dr.0 {
                        st.dr = (dr, k);
                    }
                    st.m2 = st.m2.min(-(-2.0 * log_norm + log_det + req));
                    for (slot, &i) in st.interp.iter_mut().zip(&exps) {
                        let val = -(i as f64 * log_norm + log_det + lc2 + kf * ll2);
                        *slot = slot.min(val);
                    }
                }
            }
            st
        })
        .collect();

    let mut m_tag = TagResult {
        name: "M".into(),
        pass: false,
        worst_margin: f64::INFINITY,
        witness: None,
        witness_k: 0,
        samples: 0,
    };
    let mut dr_tag = TagResult { name: "D_r".into(), ..m_tag.clone() };
    let mut interp = vec![f64::INFINITY; exps.len()];
    let mut m2 = f64::INFINITY;
    let mut gap = f64::INFINITY;
    let mut failures = Vec::new();
    for (z, st) in pts.iter().zip(&stats) {
        if st.m.1 > 0 {
            m_tag.samples += 1;
            dr_tag.samples += 1;
        }
        if st.m.0 < m_tag.worst_margin {
            m_tag.worst_margin = st.m.0;
            m_tag.witness = Some(*z);
            m_tag.witness_k = st.m.1;
        }
        if st.dr.0 < dr_tag.worst_margin {
            dr_tag.worst_margin = st.dr.0;
            dr_tag.witness = Some(*z);
            dr_tag.witness_k = st.dr.1;
        }
        m2 = m2.min(st.m2);
        for (a, b) in interp.iter_mut().zip(&st.interp) {
            *a = a.min(*b);
        }
        gap = gap.min(st.gap);
        if st.inv_fail {
            failures.push(*z);
        }
    }
    for t in [&mut m_tag, &mut dr_tag] {
        t.worst_margin = t.worst_margin.exp();
        t.pass = t.samples > 0 && t.worst_margin > 1.0;
    }
    Ok(HyperbolicityCertificate {
        c: opts.c,
        big_lambda: opts.big_lambda,
        r: opts.r,
        k_max: opts.k_max,
        tags: vec![m_tag, dr_tag],
        invariance: InvarianceReport {
            invariant: failures.is_empty(),
            min_gap: gap,
            gap_at_least_c: gap >= opts.c,
            failures,
        },
        interpolated: exps.iter().zip(&interp).map(|(&i, &m)| (i, m.exp())).collect(),
        endpoint_minus2: m2.exp(),
    })
}

/// Angle of the image of the cone center; exposed for diagnostics.
pub fn image_angle(family: &PolyMapFamily, mu: f64, z: Point, u: Point) -> f64 {
    let w = family.jac(z, mu) * Vector2::new(u[0], u[1]);
    direction_angle([w[0], w[1]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub mean: f64,
    pub stderr: f64,
    pub blocks: Vec<f64>,
    pub block_variance: f64,
    pub ambiguous: bool,
    pub final_point: Point,
}

/// Top Lyapunov exponent by tangent-vector renormalization.
pub fn lyapunov_top(
    family: &PolyMapFamily,
    mu: f64,
    z0: Point,
    n_transient: usize,
    n_avg: usize,
) -> Result<LyapunovReport> {
    let jf = family.jacobian_field();
    let mut z = z0;
    let mut w = Vector2::new(1.0, 1.0).normalize();
    for i in 0..n_transient {
        let j = jf.jac(z, mu);
        w = (j * w).normalize();
        z = jf.eval(z, mu);
        if !z[0].is_finite() || !in_box(z, &SAFETY_BOX) {
            return Err(Error::Escape { index: i + 1 });
        }
    }
    const BLOCKS: usize = 10;
    let per = (n_avg / BLOCKS).max(1);
    let mut blocks = Vec::with_capacity(BLOCKS);
    let mut step = n_transient;
    for _ in 0..BLOCKS {
        let mut s = 0.0;
        for _ in 0..per {
            let j = jf.jac(z, mu);
            w = j * w;
            let n = w.norm();
            s += n.ln();
            w /= n;
            z = jf.eval(z, mu);
            step += 1;
            if !z[0].is_finite() || !in_box(z, &SAFETY_BOX) {
                return Err(Error::Escape { index: step });
            }
        }
        blocks.push(s / per as f64);
    }
    let nb = blocks.len() as f64;
    let mean = blocks.iter().sum::<f64>() / nb;
    let var = blocks.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (nb - 1.0);
    Ok(LyapunovReport {
        mean,
        stderr: (var / nb).sqrt(),
        blocks,
        block_variance: var,
        ambiguous: var > 0.05,
        final_point: z,
    })
}

/// Largest smoothness order allowed by the dissipation budget:
/// `3 - ln(det) / LE`.
pub fn smoothness_budget(lyap: f64, det_modulus: f64) -> Result<f64> {
    if det_modulus >= 1.0 {
        return Err(Error::NotDissipative(det_modulus));
    }
    if det_modulus <= 0.0 || lyap <= 0.0 {
        return Err(Error::Precondition("need det in (0, 1) and a positive exponent".into()));
    }
    Ok(3.0 - det_modulus.ln() / lyap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_fixed_point() {
        let f = PolyMapFamily::henon(0.0);
        let e = find_periodic_orbit(&f, 0.0, 1, [0.9, 0.1]).unwrap();
        assert!((e.point[0] - 1.0).abs() < 1e-12 && e.point[1].abs() < 1e-12);
        assert!((e.sigma - 2.0).abs() < 1e-12 && e.lambda.abs() < 1e-12);
    }

    #[test]
    fn superstable_two_cycle() {
        let f = PolyMapFamily::quadratic();
        let e = find_periodic_orbit(&f, -1.0, 2, [0.1, 0.0]).unwrap();
        assert!(e.point[0].abs() < 1e-10 || (e.point[0] + 1.0).abs() < 1e-10);
        assert_eq!(e.minimal_period, 2);
        assert!(e.sigma.abs() < 1e-9 && e.lambda.abs() < 1e-9);
    }

    #[test]
    fn non_minimal_period_tagged() {
        let f = PolyMapFamily::henon(0.0);
        let e = find_periodic_orbit(&f, 0.0, 2, [0.95, 0.0]).unwrap();
        assert_eq!(e.minimal_period, 1);
    }

    #[test]
    fn resonance_examples() {
        let r = check_r(0.1, 2.0, 5, 1e-6).unwrap();
        assert!(r.pass);
        assert!((r.margin - 0.2).abs() < 1e-12);
        assert_eq!(r.worst, [1, 3]);
        assert!(!check_r(0.5, 2.0, 3, 1e-6).unwrap().pass);
        let r = check_r(0.3, 1.2, 4, 1e-6).unwrap();
        assert!(r.dissipative && r.ordered);
        assert!(check_r(0.3, 1.2, 1, 1e-6).is_err());
    }

    #[test]
    fn m1_vacuous_for_c_two() {
        let r = check_m1(-1.5, 2.0, 1.2, 5).unwrap();
        assert!(r.pass && r.vacuous);
    }

    #[test]
    fn m1_fails_near_attracting_fixed_point() {
        let r = check_m1(0.24, 0.3, 1.2, 12).unwrap();
        assert!(!r.pass);
        assert!(r.worst_margin < 1.0);
    }

    #[test]
    fn budget_values() {
        assert!((smoothness_budget(2f64.ln(), 0.5).unwrap() - 4.0).abs() < 1e-14);
        assert!((smoothness_budget(1.0, (-2f64).exp()).unwrap() - 5.0).abs() < 1e-14);
        assert!(matches!(smoothness_budget(0.4, 1.0), Err(Error::NotDissipative(_))));
    }

    #[test]
    fn linear_lyapunov_exact() {
        let f = PolyMapFamily::linear(2.0, 0.5);
        // Tangent growth does not depend on the base point for a linear map,
        // but the orbit must stay bounded, so start at the fixed point.
        let r = lyapunov_top(&f, 0.0, [0.0, 0.0], 100, 1000).unwrap();
        assert!((r.mean - 2f64.ln()).abs() < 1e-12);
    }
}
