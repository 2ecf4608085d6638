//! The extended cocycle over a neighborhood of a hyperbolic set and the
//! invariant line field it normally expands.

use crate::cheb::ChebFn2;
use crate::cone::{direction_angle, projective_angle, unit, ConeField};
use crate::error::{Error, Result};
use crate::family::{in_box, JacobianField, PolyMapFamily};
use crate::{linspace, Mat2, Point};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// Quintic smoothstep: 0 for `t <= 0`, 1 for `t >= 1`, `C^2` at the seams.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Tensor bump equal to 1 on `inner` and 0 outside `outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub inner: [f64; 4],
    pub outer: [f64; 4],
}

impl Bump {
    fn axis(x: f64, lo: f64, hi: f64, olo: f64, ohi: f64) -> f64 {
        if x < lo {
            smoothstep((x - olo) / (lo - olo))
        } else if x > hi {
            smoothstep((ohi - x) / (ohi - hi))
        } else {
            1.0
        }
    }

    pub fn eval(&self, z: Point) -> f64 {
        let (i, o) = (&self.inner, &self.outer);
        Self::axis(z[0], i[0], i[1], o[0], o[1]) * Self::axis(z[1], i[2], i[3], o[2], o[3])
    }
}

/// One component `V ⊂ V_1 ⊂ V_2` of the nested neighborhoods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedBoxes {
    pub v: [f64; 4],
    pub v1: [f64; 4],
    pub v2: [f64; 4],
}

fn strictly_inside(a: &[f64; 4], b: &[f64; 4]) -> bool {
    b[0] < a[0] && a[1] < b[1] && b[2] < a[2] && a[3] < b[3]
}

fn outer(u: Point) -> Mat2 {
    Mat2::new(u[0] * u[0], u[0] * u[1], u[1] * u[0], u[1] * u[1])
}

#[derive(Debug, Clone)]
pub struct ExtendedCocycle {
    pub jf: JacobianField,
    pub mu: f64,
    pub cone: ConeField,
    pub w: [f64; 4],
    pub boxes: Vec<NestedBoxes>,
    /// Sign of `<Df u(z), u(f z)>` on each component.
    pub signs: Vec<f64>,
    /// Interior cone directions sampled in the sup defining `mu(z)`.
    pub directions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CocycleSample {
    pub point: Point,
    pub det_phi: f64,
    pub det_df: f64,
    pub norm_phi: f64,
    pub norm_df: f64,
}

impl ExtendedCocycle {
    pub fn new(
        family: &PolyMapFamily,
        mu: f64,
        cone: ConeField,
        w: [f64; 4],
        boxes: Vec<NestedBoxes>,
    ) -> Result<Self> {
        for b in &boxes {
            if !(strictly_inside(&b.v, &b.v1) && strictly_inside(&b.v1, &b.v2) && strictly_inside(&b.v2, &w)) {
                return Err(Error::Invalid(format!("boxes {b:?} are not nested with positive margins in W")));
            }
        }
        for (i, a) in boxes.iter().enumerate() {
            for b in &boxes[i + 1..] {
                let (p, q) = (&a.v2, &b.v2);
                if p[0] < q[1] && q[0] < p[1] && p[2] < q[3] && q[2] < p[3] {
                    return Err(Error::Invalid("V_2 components overlap".into()));
                }
            }
        }
        let mut c = Self { jf: family.jacobian_field(), mu, cone, w, boxes, signs: Vec::new(), directions: 8 };
        let mut signs = Vec::new();
        for (i, b) in c.boxes.iter().enumerate() {
            let mut sign = 0.0;
            for &x in &linspace(b.v2[0], b.v2[1], 17) {
                for &y in &linspace(b.v2[2], b.v2[3], 17) {
                    let s = c.raw_sign([x, y]);
                    if s == 0.0 || (sign != 0.0 && s != sign) {
                        return Err(Error::Precondition(format!(
                            "sign of <Df u, u∘f> not continuously extendable on component {i} near ({x}, {y})"
                        )));
                    }
                    sign = s;
                }
            }
            signs.push(sign);
        }
        c.signs = signs;
        Ok(c)
    }

    pub fn u(&self, z: Point) -> Point {
        unit(self.cone.center_angle(z))
    }

    pub fn u_perp(&self, z: Point) -> Point {
        let u = self.u(z);
        [-u[1], u[0]]
    }

    fn raw_sign(&self, z: Point) -> f64 {
        let fz = self.jf.eval(z, self.mu);
        let u = self.u(z);
        let du = self.jf.jac(z, self.mu) * Vector2::new(u[0], u[1]);
        let uf = self.u(fz);
        let s = du[0] * uf[0] + du[1] * uf[1];
        if s.abs() < 1e-14 {
            0.0
        } else {
            s.signum()
        }
    }

    fn component(&self, z: Point) -> Option<usize> {
        self.boxes.iter().position(|b| in_box(z, &b.v2))
    }

    pub fn rho1(&self, z: Point) -> f64 {
        self.boxes.iter().map(|b| Bump { inner: b.v, outer: b.v1 }.eval(z)).fold(0.0, f64::max)
    }

    pub fn rho2(&self, z: Point) -> f64 {
        self.boxes.iter().map(|b| Bump { inner: b.v1, outer: b.v2 }.eval(z)).fold(0.0, f64::max)
    }

    pub fn sgn(&self, z: Point) -> f64 {
        self.component(z).map(|i| self.signs[i]).unwrap_or(1.0)
    }

    /// `sup |u_perp^* Df v|^2 / |u^* Df v|^2` over sampled cone directions `v`.
    pub fn mu_of(&self, z: Point) -> f64 {
        let df = self.jf.jac(z, self.mu);
        let fz = self.jf.eval(z, self.mu);
        let (u, up) = (self.u(fz), self.u_perp(fz));
        self.cone
            .test_directions(z, self.directions)
            .iter()
            .map(|v| {
                let w = df * Vector2::new(v[0], v[1]);
                let a = w[0] * u[0] + w[1] * u[1];
                let b = w[0] * up[0] + w[1] * up[1];
                (b * b) / (a * a)
            })
            .fold(0.0, f64::max)
    }

    pub fn tau(&self, z: Point) -> f64 {
        let r1 = self.rho1(z);
        if r1 == 1.0 {
            return 1.0;
        }
        ((1.0 - r1 * r1) * self.mu_of(z) + 1.0).sqrt()
    }

    pub fn phi(&self, z: Point) -> Mat2 {
        let df = self.jf.jac(z, self.mu);
        let fz = self.jf.eval(z, self.mu);
        let (r1, r2) = (self.rho1(z), self.rho2(z));
        let s = self.sgn(z);
        let outside = outer(self.u(z)) * (1.0 - r2);
        if r2 == 0.0 {
            return outside;
        }
        outer(self.u(fz)) * df * (s * self.tau(z) * r2) + outside + outer(self.u_perp(fz)) * df * (s * r1)
    }

    /// Determinant and norm comparisons on a `grid x grid` sample of `V`.
    pub fn sample_v(&self, grid: usize) -> Vec<CocycleSample> {
        let mut out = Vec::new();
        for b in &self.boxes {
            for &x in &linspace(b.v[0], b.v[1], grid) {
                for &y in &linspace(b.v[2], b.v[3], grid) {
                    let z = [x, y];
                    let (p, d) = (self.phi(z), self.jf.jac(z, self.mu));
                    out.push(CocycleSample {
                        point: z,
                        det_phi: p.determinant(),
                        det_df: d.determinant(),
                        norm_phi: spectral(&p),
                        norm_df: spectral(&d),
                    });
                }
            }
        }
        out
    }

    /// Direction `w` at `z` with `phi(z) w` parallel to `e`.
    pub fn pull_back(&self, z: Point, e: Point) -> Result<Point> {
        let p = self.phi(z);
        let r = p.transpose() * Vector2::new(-e[1], e[0]);
        let n = r.norm();
        if !(n > 1e-300) {
            return Err(Error::Precondition(format!("projective inverse undefined at ({}, {})", z[0], z[1])));
        }
        Ok([-r[1] / n, r[0] / n])
    }
}

fn spectral(m: &Mat2) -> f64 {
    m.singular_values().max()
}

#[derive(Debug, Clone)]
pub struct LineFieldOptions {
    pub tol: f64,
    pub max_depth: usize,
    /// Angle of the initial section relative to `u_perp`.
    pub initial_offset: f64,
    pub snapshot_degree: usize,
}

impl Default for LineFieldOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_depth: 200, initial_offset: 0.0, snapshot_degree: 16 }
    }
}

/// Invariant line field outside the cone, evaluated pointwise by graph
/// transform along forward orbits.
#[derive(Debug, Clone)]
pub struct LineField {
    pub cocycle: ExtendedCocycle,
    pub opts: LineFieldOptions,
    /// Angle relative to `u_perp` on `W`.
    pub snapshot: ChebFn2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFieldSample {
    pub point: Point,
    pub angle: f64,
    pub cone_gap: f64,
    pub depth: usize,
}

impl LineField {
    /// Unit direction of the field at `z` and the number of graph-transform
    /// steps used.
    pub fn direction_with_depth(&self, z: Point) -> Result<(Point, usize)> {
        let c = &self.cocycle;
        if !in_box(z, &c.w) {
            return Ok((c.u_perp(z), 0));
        }
        let mut orbit = vec![z];
        let mut exited = false;
        while orbit.len() <= self.opts.max_depth {
            let nz = c.jf.eval(*orbit.last().unwrap(), c.mu);
            orbit.push(nz);
            if !in_box(nz, &c.w) {
                exited = true;
                break;
            }
        }
        let initial = |w: Point| {
            let up = c.u_perp(w);
            let a = direction_angle(up) + self.opts.initial_offset;
            unit(a)
        };
        let pull = |n: usize| -> Result<Point> {
            let end = orbit[n];
            let mut e = if in_box(end, &c.w) { initial(end) } else { c.u_perp(end) };
            for i in (0..n).rev() {
                e = c.pull_back(orbit[i], e)?;
                if c.cone.contains(orbit[i], e) {
                    let p = orbit[i];
                    return Err(Error::Precondition(format!("line field enters the cone at ({}, {})", p[0], p[1])));
                }
            }
            Ok(e)
        };
        let last = orbit.len() - 1;
        if exited {
            return Ok((pull(last)?, last));
        }
        let mut prev = pull(1)?;
        for n in 2..=last {
            let e = pull(n)?;
            if projective_angle(direction_angle(e), direction_angle(prev)) < self.opts.tol {
                return Ok((e, n));
            }
            prev = e;
        }
        Err(Error::NoConvergence { what: format!("line field at ({}, {})", z[0], z[1]), residual: f64::NAN })
    }

    pub fn direction(&self, z: Point) -> Result<Point> {
        self.direction_with_depth(z).map(|(e, _)| e)
    }

    /// Signed angle of the field from `u_perp`, in `(-pi/2, pi/2]`.
    pub fn angle(&self, z: Point) -> Result<f64> {
        let e = self.direction(z)?;
        let up = self.cocycle.u_perp(z);
        let mut a = direction_angle(e) - direction_angle(up);
        while a > std::f64::consts::FRAC_PI_2 {
            a -= std::f64::consts::PI;
        }
        while a <= -std::f64::consts::FRAC_PI_2 {
            a += std::f64::consts::PI;
        }
        Ok(a)
    }

    /// `angle(Df e(z), e(f z))` over a sample of `V` whose images lie in `W`.
    pub fn invariance_residual(&self, grid: usize) -> Result<f64> {
        let c = &self.cocycle;
        let mut worst: f64 = 0.0;
        for b in &c.boxes {
            for &x in &linspace(b.v[0], b.v[1], grid) {
                for &y in &linspace(b.v[2], b.v[3], grid) {
                    let z = [x, y];
                    let fz = c.jf.eval(z, c.mu);
                    if !in_box(fz, &c.w) {
                        continue;
                    }
                    let e = self.direction(z)?;
                    let de = c.jf.jac(z, c.mu) * Vector2::new(e[0], e[1]);
                    let ef = self.direction(fz)?;
                    worst = worst.max(projective_angle(de[1].atan2(de[0]), direction_angle(ef)));
                }
            }
        }
        Ok(worst)
    }

    /// Smallest angular distance from the field to the cone on a sample of `W`.
    pub fn cone_gap(&self, grid: usize) -> Result<f64> {
        let c = &self.cocycle;
        let mut gap = f64::INFINITY;
        for &x in &linspace(c.w[0], c.w[1], grid) {
            for &y in &linspace(c.w[2], c.w[3], grid) {
                let e = self.direction([x, y])?;
                gap = gap.min(-c.cone.slack([x, y], e));
            }
        }
        Ok(gap)
    }

    pub fn samples(&self, grid: usize) -> Result<Vec<LineFieldSample>> {
        let c = &self.cocycle;
        let mut out = Vec::new();
        for &x in &linspace(c.w[0], c.w[1], grid) {
            for &y in &linspace(c.w[2], c.w[3], grid) {
                let z = [x, y];
                let (e, depth) = self.direction_with_depth(z)?;
                out.push(LineFieldSample { point: z, angle: self.angle(z)?, cone_gap: -c.cone.slack(z, e), depth });
            }
        }
        Ok(out)
    }
}

/// Fixed point of the graph transform `v -> phi~^{-1}(z) v(f z)` on sections
/// outside the cone, with `v = u_perp` off `W`.
pub fn line_field(cocycle: ExtendedCocycle, opts: LineFieldOptions) -> Result<LineField> {
    let deg = opts.snapshot_degree;
    let mut lf = LineField { cocycle, opts, snapshot: ChebFn2::zero([0.0, 1.0, 0.0, 1.0]) };
    let w = lf.cocycle.w;
    let (xs, ys) = ChebFn2::node_grid(w, deg + 1, deg + 1);
    let mut vals = Vec::with_capacity(xs.len() * ys.len());
    for &x in &xs {
        for &y in &ys {
            vals.push(lf.angle([x, y])?);
        }
    }
    lf.snapshot = ChebFn2::from_node_values(w, xs.len(), ys.len(), &vals);
    Ok(lf)
}
