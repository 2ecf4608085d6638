//! Polynomial planar map families, exact jets, tangent cocycles and the
//! Hénon-like decomposition.

use crate::error::{Error, Result};
use crate::poly::Poly3;
use crate::{linspace, Mat2, Point};
use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MAX_DEGREE: usize = 16;
pub const SAFETY_BOX: [f64; 4] = [-10.0, 10.0, -10.0, 10.0];

/// A planar map `z -> (f1(z, mu), f2(z, mu))` with polynomial coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyMapFamily {
    pub coords: [Poly3; 2],
    #[serde(rename = "box")]
    pub domain: [f64; 4],
    pub param: String,
}

/// All partial derivatives `d_x^i d_y^j d_mu^k` with `i + j + k <= order`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Jet {
    pub order: usize,
    pub value: Point,
    pub partials: Vec<([usize; 3], Point)>,
}

impl Jet {
    pub fn get(&self, i: usize, j: usize, k: usize) -> Option<Point> {
        self.partials.iter().find(|(m, _)| *m == [i, j, k]).map(|(_, v)| *v)
    }

    pub fn jacobian(&self) -> Mat2 {
        let dx = self.get(1, 0, 0).unwrap_or([0.0; 2]);
        let dy = self.get(0, 1, 0).unwrap_or([0.0; 2]);
        Mat2::new(dx[0], dy[0], dx[1], dy[1])
    }
}

pub fn in_box(z: Point, b: &[f64; 4]) -> bool {
    z[0] >= b[0] && z[0] <= b[1] && z[1] >= b[2] && z[1] <= b[3]
}

impl PolyMapFamily {
    pub fn new(coords: [Poly3; 2], domain: [f64; 4], param: impl Into<String>) -> Result<Self> {
        let f = Self { coords, domain, param: param.into() };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        for (c, p) in self.coords.iter().enumerate() {
            if p.degs().iter().any(|&d| d > MAX_DEGREE) {
                return Err(Error::Invalid(format!(
                    "coordinate {c} has degrees {:?}, limit is {MAX_DEGREE}",
                    p.degs()
                )));
            }
        }
        let d = self.domain;
        if !(d.iter().all(|v| v.is_finite()) && d[0] < d[1] && d[2] < d[3]) {
            return Err(Error::Invalid(format!("bad domain box {d:?}")));
        }
        Ok(())
    }

    /// `(x^2 + mu + y, -b x)`, parameter `a`.
    pub fn henon(b: f64) -> Self {
        let f1 = Poly3::from_terms(&[(2, 0, 0, 1.0), (0, 0, 1, 1.0), (0, 1, 0, 1.0)]);
        let f2 = Poly3::from_terms(&[(1, 0, 0, -b)]);
        Self { coords: [f1, f2], domain: [-2.5, 2.5, -2.5, 2.5], param: "a".into() }
    }

    /// `(x^2 + mu, 0)`, the quadratic family embedded in the plane.
    pub fn quadratic() -> Self {
        let f1 = Poly3::from_terms(&[(2, 0, 0, 1.0), (0, 0, 1, 1.0)]);
        Self {
            coords: [f1, Poly3::constant(0.0)],
            domain: [-2.5, 2.5, -2.5, 2.5],
            param: "a".into(),
        }
    }

    /// `(1 - mu x^2 + y, b x)`, the classical parametrization.
    pub fn henon_classic(b: f64) -> Self {
        let f1 = Poly3::from_terms(&[(0, 0, 0, 1.0), (2, 0, 1, -1.0), (0, 1, 0, 1.0)]);
        let f2 = Poly3::from_terms(&[(1, 0, 0, b)]);
        Self { coords: [f1, f2], domain: [-2.5, 2.5, -2.5, 2.5], param: "a".into() }
    }

    /// The diagonal linear map `(s x, l y)`.
    pub fn linear(s: f64, l: f64) -> Self {
        Self {
            coords: [Poly3::monomial(1, 0, 0, s), Poly3::monomial(0, 1, 0, l)],
            domain: [-2.5, 2.5, -2.5, 2.5],
            param: "mu".into(),
        }
    }

    pub fn builtin(name: &str, b: f64) -> Result<Self> {
        match name {
            "henon" => Ok(Self::henon(b)),
            "quadratic" => Ok(Self::quadratic()),
            "henon-classic" => Ok(Self::henon_classic(b)),
            "toy-unfolding" => Ok(crate::renormalization::TransitionData::toy().transition_family()),
            other => Err(Error::Invalid(format!("unknown builtin family '{other}'"))),
        }
    }

    #[inline]
    pub fn eval(&self, z: Point, mu: f64) -> Point {
        [self.coords[0].eval(z[0], z[1], mu), self.coords[1].eval(z[0], z[1], mu)]
    }

    pub fn jac(&self, z: Point, mu: f64) -> Mat2 {
        let d = |c: usize, ax: usize| self.coords[c].deriv(ax).eval(z[0], z[1], mu);
        Mat2::new(d(0, 0), d(0, 1), d(1, 0), d(1, 1))
    }

    /// Precomputed first derivatives for repeated Jacobian evaluation.
    pub fn jacobian_field(&self) -> JacobianField {
        JacobianField {
            map: self.clone(),
            d: [
                self.coords[0].deriv(0),
                self.coords[0].deriv(1),
                self.coords[1].deriv(0),
                self.coords[1].deriv(1),
            ],
        }
    }

    pub fn eval_jet(&self, z: Point, mu: f64, order: usize) -> Result<Jet> {
        if !in_box(z, &self.domain) {
            return Err(Error::OutsideDomain { x: z[0], y: z[1] });
        }
        let mut partials = Vec::new();
        for total in 0..=order {
            for i in (0..=total).rev() {
                for j in (0..=total - i).rev() {
                    let k = total - i - j;
                    let v = [
                        self.coords[0].partial(i, j, k).eval(z[0], z[1], mu),
                        self.coords[1].partial(i, j, k).eval(z[0], z[1], mu),
                    ];
                    partials.push(([i, j, k], v));
                }
            }
        }
        Ok(Jet { order, value: self.eval(z, mu), partials })
    }

    /// `self ∘ inner`, exact.
    pub fn compose(&self, inner: &Self) -> Self {
        let m = Poly3::mu();
        let c = |p: &Poly3| p.compose(&inner.coords[0], &inner.coords[1], &m);
        Self {
            coords: [c(&self.coords[0]), c(&self.coords[1])],
            domain: inner.domain,
            param: self.param.clone(),
        }
    }

    /// The `k`-th iterate as an exact polynomial family.
    pub fn iterate(&self, k: usize) -> Self {
        assert!(k >= 1);
        let mut g = self.clone();
        for _ in 1..k {
            g = self.compose(&g);
        }
        g
    }

    /// Freezes the parameter.
    pub fn at_param(&self, mu: f64) -> Self {
        Self {
            coords: [self.coords[0].at_mu(mu), self.coords[1].at_mu(mu)],
            domain: self.domain,
            param: self.param.clone(),
        }
    }

    /// The orbit of `z0` of length `n + 1`.
    pub fn orbit(&self, z0: Point, mu: f64, n: usize, safety: &[f64; 4]) -> Result<Vec<Point>> {
        let mut out = Vec::with_capacity(n + 1);
        let mut z = z0;
        out.push(z);
        for i in 1..=n {
            z = self.eval(z, mu);
            if !z[0].is_finite() || !z[1].is_finite() || !in_box(z, safety) {
                return Err(Error::Escape { index: i });
            }
            out.push(z);
        }
        Ok(out)
    }
}

/// Cached derivative polynomials of a family.
#[derive(Debug, Clone)]
pub struct JacobianField {
    pub map: PolyMapFamily,
    d: [Poly3; 4],
}

impl JacobianField {
    #[inline]
    pub fn eval(&self, z: Point, mu: f64) -> Point {
        self.map.eval(z, mu)
    }

    #[inline]
    pub fn jac(&self, z: Point, mu: f64) -> Mat2 {
        let e = |p: &Poly3| p.eval(z[0], z[1], mu);
        Mat2::new(e(&self.d[0]), e(&self.d[1]), e(&self.d[2]), e(&self.d[3]))
    }
}

/// QR-stabilized product of Jacobians along an orbit.
///
/// With `Q_0` the initial frame, `J_k Q_{k-1} = Q_k R_k`, so that
/// `D f^n(z0) Q_0 = Q_n R_n ... R_1`.
#[derive(Debug, Clone)]
pub struct Cocycle {
    pub orbit: Vec<Point>,
    pub q0: Mat2,
    pub q: Mat2,
    pub r_factors: Vec<Mat2>,
    /// `ln |r_11|` per step; sums to `ln |D f^n(z0) u|` for `u` the first column of `q0`.
    pub log_norm_steps: Vec<f64>,
    pub log_det_steps: Vec<f64>,
    pub det_sign: f64,
}

impl Cocycle {
    pub fn log_norm(&self) -> f64 {
        self.log_norm_steps.iter().sum()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det_steps.iter().sum()
    }

    /// Reassembles `D f^n(z0)`.
    pub fn product(&self) -> Mat2 {
        let mut r = Mat2::identity();
        for f in &self.r_factors {
            r = f * r;
        }
        self.q * r * self.q0.transpose()
    }
}

fn qr2(a: &Mat2) -> (Mat2, Mat2) {
    let c0 = Vector2::new(a[(0, 0)], a[(1, 0)]);
    let n0 = c0.norm();
    let q1 = if n0 > 0.0 { c0 / n0 } else { Vector2::new(1.0, 0.0) };
    let q2 = Vector2::new(-q1[1], q1[0]);
    let c1 = Vector2::new(a[(0, 1)], a[(1, 1)]);
    let q = Mat2::new(q1[0], q2[0], q1[1], q2[1]);
    let r = Mat2::new(n0, q1.dot(&c1), 0.0, q2.dot(&c1));
    (q, r)
}

pub fn orbit_cocycle(
    family: &PolyMapFamily,
    z0: Point,
    mu: f64,
    n: usize,
    direction: Option<Point>,
    safety: &[f64; 4],
) -> Result<Cocycle> {
    if n == 0 {
        return Err(Error::Precondition("cocycle length must be at least 1".into()));
    }
    let jf = family.jacobian_field();
    let orbit = family.orbit(z0, mu, n, safety)?;
    let q0 = match direction {
        Some(u) => {
            let nu = (u[0] * u[0] + u[1] * u[1]).sqrt();
            let (c, s) = (u[0] / nu, u[1] / nu);
            Mat2::new(c, -s, s, c)
        }
        None => Mat2::identity(),
    };
    let mut q = q0;
    let mut r_factors = Vec::with_capacity(n);
    let mut log_norm_steps = Vec::with_capacity(n);
    let mut log_det_steps = Vec::with_capacity(n);
    let mut det_sign = 1.0;
    for z in &orbit[..n] {
        let a = jf.jac(*z, mu) * q;
        let (qn, r) = qr2(&a);
        log_norm_steps.push(r[(0, 0)].abs().ln());
        let d = r[(0, 0)] * r[(1, 1)];
        log_det_steps.push(d.abs().ln());
        det_sign *= d.signum();
        r_factors.push(r);
        q = qn;
    }
    Ok(Cocycle { orbit, q0, q, r_factors, log_norm_steps, log_det_steps, det_sign })
}

/// The decomposition `(x^2 + a + y, -b x) + (A, b B)` with `A`, `B`
/// polynomials in `(x, y, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HenonLikeFamily {
    pub a_range: [f64; 2],
    pub b: f64,
    #[serde(rename = "A")]
    pub pert_a: Poly3,
    #[serde(rename = "B")]
    pub pert_b: Poly3,
    pub r: usize,
    #[serde(rename = "K")]
    pub k_box: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaWitness {
    /// 0 for `A`, 1 for `B`.
    pub component: usize,
    pub multi_index: [usize; 3],
    pub point: Point,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub delta: f64,
    pub witness: Option<DeltaWitness>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetBoundsReport {
    pub pass: bool,
    pub delta: f64,
    pub worst_ratio: f64,
    pub worst_point: Point,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl HenonLikeFamily {
    pub fn pure(b: f64, a_range: [f64; 2]) -> Self {
        Self {
            a_range,
            b,
            pert_a: Poly3::constant(0.0),
            pert_b: Poly3::constant(0.0),
            r: 2,
            k_box: [-2.5, 2.5, -2.5, 2.5],
        }
    }

    pub fn to_family(&self) -> PolyMapFamily {
        let f1 = Poly3::from_terms(&[(2, 0, 0, 1.0), (0, 0, 1, 1.0), (0, 1, 0, 1.0)]).add(&self.pert_a);
        let f2 = Poly3::monomial(1, 0, 0, -self.b).add(&self.pert_b.scale(self.b));
        PolyMapFamily { coords: [f1, f2], domain: self.k_box, param: "a".into() }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { pert_a: self.pert_a.scale(c), pert_b: self.pert_b.scale(c), ..self.clone() }
    }

    /// Derivative multi-indices measured: all `(x, y)` derivatives up to
    /// order `r`, plus mixed ones involving `a` up to total order 2.
    pub fn delta_indices(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        for total in 0..=self.r {
            for i in 0..=total {
                out.push([i, total - i, 0]);
            }
        }
        for total in 1..=2usize {
            for k in 1..=total {
                for i in 0..=(total - k) {
                    out.push([i, total - k - i, k]);
                }
            }
        }
        out
    }

    pub fn delta_with_grid(&self, grid: usize, a_samples: usize) -> DeltaReport {
        let xs = linspace(self.k_box[0], self.k_box[1], grid);
        let ys = linspace(self.k_box[2], self.k_box[3], grid);
        let a_vals = if self.a_range[0] == self.a_range[1] {
            vec![self.a_range[0]]
        } else {
            linspace(self.a_range[0], self.a_range[1], a_samples.max(1))
        };
        let mut jobs = Vec::new();
        for (c, p) in [&self.pert_a, &self.pert_b].into_iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            for m in self.delta_indices() {
                let d = p.partial(m[0], m[1], m[2]);
                if d.is_zero() {
                    continue;
                }
                jobs.push((c, m, d));
            }
        }
        let best = jobs
            .par_iter()
            .map(|(c, m, d)| {
                let mut best = (0.0f64, [0.0; 2], 0.0);
                for &a in &a_vals {
                    let da = d.at_mu(a);
                    for &x in &xs {
                        for &y in &ys {
                            let v = da.eval(x, y, 0.0).abs();
                            if v > best.0 {
                                best = (v, [x, y], a);
                            }
                        }
                    }
                }
                (best.0, DeltaWitness { component: *c, multi_index: *m, point: best.1, a: best.2 })
            })
            .reduce_with(|u, v| if v.0 > u.0 { v } else { u });
        match best {
            Some((delta, w)) if delta > 0.0 => DeltaReport { delta, witness: Some(w) },
            _ => DeltaReport { delta: 0.0, witness: None },
        }
    }

    /// δ-likeness: the largest sampled derivative of `A` or `B` on `K` over
    /// the parameter range.
    pub fn henon_delta(&self) -> Result<DeltaReport> {
        if self.r < 1 {
            return Err(Error::Precondition("smoothness order must be at least 1".into()));
        }
        let k = self.k_box;
        if !(k[0] < k[1] && k[2] < k[3]) {
            return Err(Error::Precondition("box K is empty".into()));
        }
        Ok(self.delta_with_grid(257, 9))
    }

    /// Samples `|det Df| / |b|` on a `grid x grid` mesh of `K` (and over the
    /// parameter range) and checks it against `[1 - 3δ, 1 + 3δ]`.
    pub fn det_bounds_check(&self, grid: usize) -> Result<DetBoundsReport> {
        if self.b == 0.0 {
            return Err(Error::Precondition(
                "b = 0: the determinant bracket degenerates to a point; use b != 0".into(),
            ));
        }
        let delta = self.henon_delta()?.delta;
        self.det_bounds_with_delta(grid, delta)
    }

    pub fn det_bounds_with_delta(&self, grid: usize, delta: f64) -> Result<DetBoundsReport> {
        if self.b == 0.0 {
            return Err(Error::Precondition("b must be nonzero".into()));
        }
        if delta >= 1.0 / 3.0 {
            return Err(Error::Precondition(format!("δ = {delta} is not below 1/3")));
        }
        let ax = self.pert_a.deriv(0);
        let ay = self.pert_a.deriv(1);
        let bx = self.pert_b.deriv(0);
        let by = self.pert_b.deriv(1);
        let xs = linspace(self.k_box[0], self.k_box[1], grid);
        let ys = linspace(self.k_box[2], self.k_box[3], grid);
        let a_vals = if self.a_range[0] == self.a_range[1] {
            vec![self.a_range[0]]
        } else {
            linspace(self.a_range[0], self.a_range[1], 3)
        };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut worst = (0.0f64, [0.0; 2], 1.0);
        for &a in &a_vals {
            for &x in &xs {
                for &y in &ys {
                    let ratio = ((2.0 * x + ax.eval(x, y, a)) * by.eval(x, y, a)
                        + (1.0 + ay.eval(x, y, a)) * (1.0 - bx.eval(x, y, a)))
                    .abs();
                    lo = lo.min(ratio);
                    hi = hi.max(ratio);
                    let dev = (ratio - 1.0).abs();
                    if dev >= worst.0 {
                        worst = (dev, [x, y], ratio);
                    }
                }
            }
        }
        let tol = 1e-12;
        Ok(DetBoundsReport {
            pass: lo >= 1.0 - 3.0 * delta - tol && hi <= 1.0 + 3.0 * delta + tol,
            delta,
            worst_ratio: worst.2,
            worst_point: worst.1,
            min_ratio: lo,
            max_ratio: hi,
        })
    }
}
