//! Explicit renormalization of a homoclinic unfolding given in linearizing
//! coordinates, its reparametrization, and the sink-window scan.

use crate::error::{Error, Result};
use crate::family::{in_box, HenonLikeFamily, JacobianField, PolyMapFamily};
use crate::poly::Poly3;
use crate::{linear_fit, linspace, LinearFit, Mat2, Point};
use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Homoclinic transition data in the linearizing chart of a saddle:
/// `(p + x, y) -> (xi x^2 + mu + gamma y, q + zeta x) + E_mu(p + x, y)`,
/// while the saddle acts as `(x, y) -> (sigma_mu x, lambda_mu y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionData {
    /// Coefficients of `sigma_mu` in `mu`, lowest first (degree <= 4).
    pub sigma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub p: f64,
    pub q: f64,
    pub xi: f64,
    pub gamma: f64,
    pub zeta: f64,
    /// Transition time `N`.
    pub n_transition: usize,
    /// `E^1`, `E^2` as polynomials in the chart coordinates and `mu`.
    pub e1: Poly3,
    pub e2: Poly3,
    /// Domain `D_P` around `P = (p, 0)`.
    pub domain_p: [f64; 4],
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ECheck {
    pub name: String,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EReport {
    pub pass: bool,
    pub checks: Vec<ECheck>,
}

impl TransitionData {
    /// `sigma = 2`, `lambda = 0.1`, `xi = gamma = 1`, `zeta = -1`,
    /// `p = q = 1`, `N = 1`, `E = 0`.
    pub fn toy() -> Self {
        Self {
            sigma: vec![2.0],
            lambda: vec![0.1],
            p: 1.0,
            q: 1.0,
            xi: 1.0,
            gamma: 1.0,
            zeta: -1.0,
            n_transition: 1,
            e1: Poly3::constant(0.0),
            e2: Poly3::constant(0.0),
            domain_p: [-2.0, 4.0, -3.0, 3.0],
        }
    }

    /// The toy unfolding with a fixed nonzero polynomial error term
    /// satisfying the conditions checked by [`Self::validate_e`].
    pub fn toy_perturbed() -> Self {
        let e1 = Poly3::from_terms(&[(3, 0, 0, 0.2), (2, 0, 0, -0.6), (1, 0, 0, 0.6), (0, 0, 0, -0.2), (1, 1, 0, 0.3), (0, 1, 0, -0.3), (0, 2, 0, 0.1)]);
        let e2 = Poly3::from_terms(&[(2, 0, 0, 0.2), (1, 0, 0, -0.4), (0, 0, 0, 0.2), (0, 2, 0, 0.1), (1, 1, 0, 0.1), (0, 1, 0, -0.1)]);
        Self::toy().with_error(e1, e2)
    }

    pub fn with_error(mut self, e1: Poly3, e2: Poly3) -> Self {
        self.e1 = e1;
        self.e2 = e2;
        self
    }

    pub fn validate_shape(&self) -> Result<()> {
        if self.xi == 0.0 || self.gamma == 0.0 || self.zeta == 0.0 {
            return Err(Error::Invalid("xi, gamma and zeta must be nonzero".into()));
        }
        if self.sigma.is_empty() || self.lambda.is_empty() || self.sigma.len() > 5 || self.lambda.len() > 5 {
            return Err(Error::Invalid("sigma and lambda need 1 to 5 coefficients".into()));
        }
        Ok(())
    }

    pub fn constant_eigen(&self) -> bool {
        self.sigma[1..].iter().all(|&c| c == 0.0) && self.lambda[1..].iter().all(|&c| c == 0.0)
    }

    pub fn sigma_at(&self, mu: f64) -> f64 {
        horner(&self.sigma, mu)
    }

    pub fn lambda_at(&self, mu: f64) -> f64 {
        horner(&self.lambda, mu)
    }

    /// `b' = -zeta gamma`.
    pub fn b_prime(&self) -> f64 {
        -self.zeta * self.gamma
    }

    /// The transition map as a polynomial family in chart coordinates.
    pub fn transition_family(&self) -> PolyMapFamily {
        let (p, xi, g, z, q) = (self.p, self.xi, self.gamma, self.zeta, self.q);
        let t1 = Poly3::from_terms(&[
            (2, 0, 0, xi),
            (1, 0, 0, -2.0 * xi * p),
            (0, 0, 0, xi * p * p),
            (0, 0, 1, 1.0),
            (0, 1, 0, g),
        ])
        .add(&self.e1);
        let t2 = Poly3::from_terms(&[(0, 0, 0, q - z * p), (1, 0, 0, z)]).add(&self.e2);
        PolyMapFamily { coords: [t1.trimmed(), t2.trimmed()], domain: self.domain_p, param: "mu".into() }
    }

    #[inline]
    pub fn transition(&self, z: Point, mu: f64) -> Point {
        let x = z[0] - self.p;
        [
            self.xi * x * x + mu + self.gamma * z[1] + self.e1.eval(z[0], z[1], mu),
            self.q + self.zeta * x + self.e2.eval(z[0], z[1], mu),
        ]
    }

    /// Conditions on `E` at `P = (p, 0)`, `mu = 0`.
    pub fn validate_e(&self) -> EReport {
        let (p, tol) = (self.p, 1e-10);
        let at = |poly: &Poly3, i, j, k| poly.partial(i, j, k).eval(p, 0.0, 0.0);
        let e2_norm = at(&self.e1, 0, 0, 0).hypot(at(&self.e2, 0, 0, 0));
        let items = [
            ("E1: d_mu E1(P)", at(&self.e1, 0, 0, 1)),
            ("E2: E_0(P)", e2_norm),
            ("E3: d_x E1_0(P)", at(&self.e1, 1, 0, 0)),
            ("E3: d_y E1_0(P)", at(&self.e1, 0, 1, 0)),
            ("E3: d_xx E1_0(P)", at(&self.e1, 2, 0, 0)),
            ("E3: d_x E2_0(P)", at(&self.e2, 1, 0, 0)),
        ];
        let checks: Vec<ECheck> = items
            .iter()
            .map(|(n, r)| ECheck { name: (*n).into(), residual: r.abs(), pass: r.abs() <= tol })
            .collect();
        EReport { pass: checks.iter().all(|c| c.pass), checks }
    }

    /// Normalized parameter `a(mu) = s^{2n} xi mu + s^{2n} l^n xi gamma q - s^n xi p`.
    pub fn a_of_mu(&self, n: usize, mu: f64) -> f64 {
        let s = self.sigma_at(mu).powi(n as i32);
        let l = self.lambda_at(mu).powi(n as i32);
        s * s * self.xi * mu + s * s * l * self.xi * self.gamma * self.q - s * self.xi * self.p
    }

    /// `M_n(mu~) = s^{-2n} mu~ - l^n gamma q + s^{-n} p`, solved by fixed-point
    /// iteration when the eigenvalues depend on `mu`.
    pub fn reparam_mn(&self, n: usize, mu_t: f64) -> Result<f64> {
        let m = |mu: f64| {
            let s = self.sigma_at(mu).powi(-(n as i32));
            let l = self.lambda_at(mu).powi(n as i32);
            s * s * mu_t - l * self.gamma * self.q + s * self.p
        };
        if self.constant_eigen() {
            return Ok(m(0.0));
        }
        let mut mu = m(0.0);
        for _ in 0..50 {
            let next = m(mu);
            if !next.is_finite() {
                break;
            }
            if (next - mu).abs() <= 1e-14 * (1.0 + mu.abs()) {
                return Ok(next);
            }
            mu = next;
        }
        Err(Error::NoConvergence { what: "reparametrization fixed point".into(), residual: (m(mu) - mu).abs() })
    }

    /// Inverse of the normalized parameter: the `mu` with `a(mu) = a`.
    pub fn mu_of_a(&self, n: usize, a: f64) -> Result<f64> {
        self.reparam_mn(n, a / self.xi)
    }

    /// `Psi_mu(x, y) = (xi s^n (x - p), xi gamma s^{2n} (y - l^n q))`.
    pub fn psi(&self, n: usize, mu: f64, z: Point) -> Point {
        let s = self.sigma_at(mu).powi(n as i32);
        let l = self.lambda_at(mu).powi(n as i32);
        [self.xi * s * (z[0] - self.p), self.xi * self.gamma * s * s * (z[1] - l * self.q)]
    }

    pub fn psi_inv(&self, n: usize, mu: f64, w: Point) -> Point {
        let s = self.sigma_at(mu).powi(n as i32);
        let l = self.lambda_at(mu).powi(n as i32);
        [self.p + w[0] / (self.xi * s), l * self.q + w[1] / (self.xi * self.gamma * s * s)]
    }

    /// `L^n ∘ T` in chart coordinates.
    #[inline]
    pub fn return_map(&self, n: usize, mu: f64, z: Point) -> Point {
        let t = self.transition(z, mu);
        [self.sigma_at(mu).powi(n as i32) * t[0], self.lambda_at(mu).powi(n as i32) * t[1]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormResult {
    pub n: usize,
    pub data: TransitionData,
    pub sigma0: f64,
    pub lambda0: f64,
    pub b_prime: f64,
    pub b: f64,
    /// `a(mu) = a_slope mu + a_offset` when the eigenvalues are constant.
    pub a_affine: Option<[f64; 2]>,
    /// Output family in `(x, y, a)`, exact when the eigenvalues are constant.
    pub family: Option<HenonLikeFamily>,
}

impl RenormResult {
    /// Perturbation terms `(A, B)` of the renormalized map at parameter `mu`.
    pub fn perturbation(&self, z: Point, mu: f64) -> (f64, f64) {
        let d = &self.data;
        let n = self.n as i32;
        let s = d.sigma_at(mu).powi(n);
        let l = d.lambda_at(mu).powi(n);
        let w = d.psi_inv(self.n, mu, z);
        let big_a = s * s * d.xi * d.e1.eval(w[0], w[1], mu);
        let coef = s * s * l / (self.lambda0.powi(n) * self.sigma0.powi(n)) * d.xi * d.gamma / self.b_prime;
        let big_b = coef * d.e2.eval(w[0], w[1], mu) + (1.0 - self.b_prime / self.b * l * s) * z[0];
        (big_a, big_b)
    }

    /// `Rf` at parameter `mu`, i.e. at `a = a(mu)`.
    pub fn rf(&self, z: Point, mu: f64) -> Point {
        let a = self.data.a_of_mu(self.n, mu);
        let (pa, pb) = self.perturbation(z, mu);
        [z[0] * z[0] + a + z[1] + pa, -self.b * z[0] + self.b * pb]
    }

    /// Renormalized family frozen at parameter `mu`, as a Hénon-like family
    /// with a degenerate parameter range.
    pub fn slice(&self, mu: f64) -> HenonLikeFamily {
        let d = &self.data;
        let n = self.n as i32;
        let s = d.sigma_at(mu).powi(n);
        let l = d.lambda_at(mu).powi(n);
        let a = d.a_of_mu(self.n, mu);
        let px = Poly3::from_terms(&[(0, 0, 0, d.p), (1, 0, 0, 1.0 / (d.xi * s))]);
        let py = Poly3::from_terms(&[(0, 0, 0, l * d.q), (0, 1, 0, 1.0 / (d.xi * d.gamma * s * s))]);
        let pm = Poly3::constant(mu);
        let big_a = d.e1.compose(&px, &py, &pm).scale(s * s * d.xi);
        let coef = s * s * l / (self.lambda0.powi(n) * self.sigma0.powi(n)) * d.xi * d.gamma / self.b_prime;
        let big_b = d
            .e2
            .compose(&px, &py, &pm)
            .scale(coef)
            .add(&Poly3::monomial(1, 0, 0, 1.0 - self.b_prime / self.b * l * s));
        HenonLikeFamily {
            a_range: [a, a],
            b: self.b,
            pert_a: big_a.trimmed(),
            pert_b: big_b.trimmed(),
            r: 2,
            k_box: [-2.5, 2.5, -2.5, 2.5],
        }
    }
}

/// Applies the renormalization with `n` passes near the saddle.
pub fn renormalize(data: &TransitionData, n: usize) -> Result<RenormResult> {
    data.validate_shape()?;
    if n == 0 {
        return Err(Error::Precondition("n must be at least 1".into()));
    }
    let rep = data.validate_e();
    if !rep.pass {
        let failed: Vec<_> = rep.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
        return Err(Error::Precondition(format!("transition error term fails {failed:?}")));
    }
    let mu0 = data.reparam_mn(n, 0.0)?;
    let center = data.psi_inv(n, mu0, [0.0, 0.0]);
    let image = data.return_map(n, mu0, center);
    if !in_box(center, &data.domain_p) || !in_box(image, &data.domain_p) {
        return Err(Error::Precondition(format!("empty composed domain for n = {n}")));
    }
    let sigma0 = data.sigma_at(0.0);
    let lambda0 = data.lambda_at(0.0);
    let b_prime = data.b_prime();
    let nn = n as i32;
    let b = b_prime * lambda0.powi(nn) * sigma0.powi(nn);
    let mut out = RenormResult { n, data: data.clone(), sigma0, lambda0, b_prime, b, a_affine: None, family: None };
    if data.constant_eigen() {
        let (s, l) = (sigma0.powi(nn), lambda0.powi(nn));
        let slope = s * s * data.xi;
        let offset = s * s * l * data.xi * data.gamma * data.q - s * data.xi * data.p;
        out.a_affine = Some([slope, offset]);
        // Substitute x, y by the inverse chart change and mu by mu(a).
        let px = Poly3::from_terms(&[(0, 0, 0, data.p), (1, 0, 0, 1.0 / (data.xi * s))]);
        let py = Poly3::from_terms(&[(0, 0, 0, l * data.q), (0, 1, 0, 1.0 / (data.xi * data.gamma * s * s))]);
        let pm = Poly3::from_terms(&[(0, 0, 0, -offset / slope), (0, 0, 1, 1.0 / slope)]);
        let big_a = data.e1.compose(&px, &py, &pm).scale(s * s * data.xi);
        let coef = s * s * l / (l * s) * data.xi * data.gamma / b_prime;
        let big_b = data
            .e2
            .compose(&px, &py, &pm)
            .scale(coef)
            .add(&Poly3::monomial(1, 0, 0, 1.0 - b_prime / b * l * s));
        out.family = Some(HenonLikeFamily {
            a_range: [-2.0, 0.25],
            b,
            pert_a: big_a.trimmed(),
            pert_b: big_b.trimmed(),
            r: 2,
            k_box: [-2.5, 2.5, -2.5, 2.5],
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residual: f64,
    pub skipped: usize,
    pub total: usize,
}

/// `sup |Psi ∘ (L^n ∘ T) ∘ Psi^{-1} - Rf|` over a `grid x grid` mesh of
/// `[-2.5, 2.5]^2` and five normalized parameters in `[-0.1, 0.1]`.
/// `psi_scale` multiplies `Psi` (1 for the true conjugacy).
pub fn conjugacy_residual_scaled(res: &RenormResult, grid: usize, psi_scale: f64) -> Result<ResidualReport> {
    let d = &res.data;
    let ks = linspace(-2.5, 2.5, grid);
    let mut worst: f64 = 0.0;
    let (mut skipped, mut total) = (0usize, 0usize);
    for mu_t in linspace(-0.1, 0.1, 5) {
        let mu = d.reparam_mn(res.n, mu_t)?;
        let rf_exact = res.family.as_ref().map(|f| f.to_family());
        let a = d.a_of_mu(res.n, mu);
        for &x in &ks {
            for &y in &ks {
                total += 1;
                let w = d.psi_inv(res.n, mu, [x, y]);
                if !in_box(w, &d.domain_p) {
                    skipped += 1;
                    continue;
                }
                let img = d.return_map(res.n, mu, w);
                let lhs = d.psi(res.n, mu, img);
                let lhs = [lhs[0] * psi_scale, lhs[1] * psi_scale];
                let rhs = match &rf_exact {
                    Some(f) => f.eval([x, y], a),
                    None => res.rf([x, y], mu),
                };
                worst = worst.max((lhs[0] - rhs[0]).abs()).max((lhs[1] - rhs[1]).abs());
            }
        }
    }
    if 2 * skipped > total {
        return Err(Error::DomainMismatch { skipped, total });
    }
    Ok(ResidualReport { residual: worst, skipped, total })
}

pub fn conjugacy_residual(res: &RenormResult, grid: usize) -> Result<ResidualReport> {
    conjugacy_residual_scaled(res, grid, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub n: usize,
    pub delta: f64,
    pub c0_a: f64,
    pub c0_b: f64,
    /// Largest second derivative of `A` or `B`.
    pub d2: f64,
    pub d2_b: f64,
    /// Largest order-`r` derivative of `A` or `B`.
    pub dr: f64,
    /// Diameter of `Psi^{-1}(K)`.
    pub image_diameter: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaProfile {
    pub rows: Vec<DeltaRow>,
    pub slope: Option<LinearFit>,
    pub bucket_slopes: Vec<(String, Option<LinearFit>)>,
    pub monotone: bool,
}

fn sup_partials(p: &Poly3, orders: &[[usize; 3]], k: &[f64; 4], a_vals: &[f64], grid: usize) -> f64 {
    let xs = linspace(k[0], k[1], grid);
    let ys = linspace(k[2], k[3], grid);
    let mut best: f64 = 0.0;
    for m in orders {
        let d = p.partial(m[0], m[1], m[2]);
        if d.is_zero() {
            continue;
        }
        for &a in a_vals {
            let da = d.at_mu(a);
            for &x in &xs {
                for &y in &ys {
                    best = best.max(da.eval(x, y, 0.0).abs());
                }
            }
        }
    }
    best
}

fn fit_log(ns: &[f64], vals: &[f64]) -> Option<LinearFit> {
    let pts: Vec<(f64, f64)> = ns.iter().zip(vals).filter(|(_, v)| **v > 0.0).map(|(n, v)| (*n, v.ln())).collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    linear_fit(&x, &y)
}

/// δ-likeness of the renormalized families over a range of `n`, with
/// exponential rate fits overall and per derivative bucket.
pub fn delta_profile(data: &TransitionData, ns: &[usize], k_box: [f64; 4], r: usize) -> Result<DeltaProfile> {
    let rows: Vec<Result<DeltaRow>> = ns
        .par_iter()
        .map(|&n| {
            let res = renormalize(data, n)?;
            let fam = match &res.family {
                Some(f) => f.clone(),
                None => res.slice(data.reparam_mn(n, 0.0)?),
            };
            let fam = HenonLikeFamily { r, k_box, ..fam };
            let delta = fam.delta_with_grid(129, 5).delta;
            let a_vals: Vec<f64> = if fam.a_range[0] == fam.a_range[1] {
                vec![fam.a_range[0]]
            } else {
                linspace(fam.a_range[0], fam.a_range[1], 5)
            };
            let g = 129;
            let ord = |t: usize| (0..=t).map(|i| [i, t - i, 0]).collect::<Vec<_>>();
            let c0_a = sup_partials(&fam.pert_a, &ord(0), &k_box, &a_vals, g);
            let c0_b = sup_partials(&fam.pert_b, &ord(0), &k_box, &a_vals, g);
            let d2_b = sup_partials(&fam.pert_b, &ord(2), &k_box, &a_vals, g);
            let d2 = sup_partials(&fam.pert_a, &ord(2), &k_box, &a_vals, g).max(d2_b);
            let dr = sup_partials(&fam.pert_a, &ord(r), &k_box, &a_vals, g)
                .max(sup_partials(&fam.pert_b, &ord(r), &k_box, &a_vals, g));
            let s = data.sigma0_n(n);
            let wx = (k_box[1] - k_box[0]) / (data.xi.abs() * s);
            let wy = (k_box[3] - k_box[2]) / ((data.xi * data.gamma).abs() * s * s);
            Ok(DeltaRow { n, delta, c0_a, c0_b, d2, d2_b, dr, image_diameter: wx.hypot(wy), b: res.b })
        })
        .collect();
    let rows: Vec<DeltaRow> = rows.into_iter().collect::<Result<_>>()?;
    let nf: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let col = |f: fn(&DeltaRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let deltas = col(|r| r.delta);
    let monotone = deltas.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let bucket_slopes = vec![
        ("c0_a".to_string(), fit_log(&nf, &col(|r| r.c0_a))),
        ("c0_b".to_string(), fit_log(&nf, &col(|r| r.c0_b))),
        ("d2".to_string(), fit_log(&nf, &col(|r| r.d2))),
        ("d2_b".to_string(), fit_log(&nf, &col(|r| r.d2_b))),
        ("dr".to_string(), fit_log(&nf, &col(|r| r.dr))),
        ("image_diameter".to_string(), fit_log(&nf, &col(|r| r.image_diameter))),
    ];
    Ok(DeltaProfile { slope: fit_log(&nf, &deltas), rows, bucket_slopes, monotone })
}

impl TransitionData {
    fn sigma0_n(&self, n: usize) -> f64 {
        self.sigma_at(0.0).powi(n as i32)
    }
}

// ---------------------------------------------------------------------------
// Sink windows.

/// A parametrized planar map with derivative.
pub trait PlanarFamily: Sync {
    fn eval(&self, z: Point, mu: f64) -> Point;
    fn jac(&self, z: Point, mu: f64) -> Mat2;
    fn in_domain(&self, _z: Point) -> bool {
        true
    }
}

impl PlanarFamily for JacobianField {
    fn eval(&self, z: Point, mu: f64) -> Point {
        JacobianField::eval(self, z, mu)
    }

    fn jac(&self, z: Point, mu: f64) -> Mat2 {
        JacobianField::jac(self, z, mu)
    }

    fn in_domain(&self, z: Point) -> bool {
        in_box(z, &crate::family::SAFETY_BOX)
    }
}

/// The return map `L^n ∘ T` of the unfolding.
pub struct ReturnMap<'a> {
    pub data: &'a TransitionData,
    pub n: usize,
    t: JacobianField,
}

impl<'a> ReturnMap<'a> {
    pub fn new(data: &'a TransitionData, n: usize) -> Self {
        Self { data, n, t: data.transition_family().jacobian_field() }
    }
}

impl PlanarFamily for ReturnMap<'_> {
    fn eval(&self, z: Point, mu: f64) -> Point {
        let t = self.t.eval(z, mu);
        let nn = self.n as i32;
        [self.data.sigma_at(mu).powi(nn) * t[0], self.data.lambda_at(mu).powi(nn) * t[1]]
    }

    fn jac(&self, z: Point, mu: f64) -> Mat2 {
        let nn = self.n as i32;
        let l = Mat2::new(self.data.sigma_at(mu).powi(nn), 0.0, 0.0, self.data.lambda_at(mu).powi(nn));
        l * self.t.jac(z, mu)
    }

    fn in_domain(&self, z: Point) -> bool {
        in_box(z, &self.data.domain_p)
    }
}

fn iterate_fj<F: PlanarFamily + ?Sized>(f: &F, z: Point, mu: f64, p: usize) -> Option<(Point, Mat2)> {
    let mut w = z;
    let mut m = Mat2::identity();
    for _ in 0..p {
        m = f.jac(w, mu) * m;
        w = f.eval(w, mu);
        if !w[0].is_finite() || !w[1].is_finite() || !f.in_domain(w) {
            return None;
        }
    }
    Some((w, m))
}

/// Spectral radius of an attracting period-`p` cycle reached from `z0`, if
/// there is one.
pub fn attracting_cycle<F: PlanarFamily + ?Sized>(
    f: &F,
    mu: f64,
    p: usize,
    z0: Point,
    n_iter: usize,
) -> Option<(Point, f64)> {
    let mut z = z0;
    for _ in 0..n_iter {
        z = f.eval(z, mu);
        if !z[0].is_finite() || !z[1].is_finite() || !f.in_domain(z) {
            return None;
        }
    }
    for _ in 0..50 {
        let (w, m) = iterate_fj(f, z, mu, p)?;
        let r = Vector2::new(w[0] - z[0], w[1] - z[1]);
        let step = (m - Mat2::identity()).lu().solve(&r)?;
        z = [z[0] - step[0], z[1] - step[1]];
        if step.norm() < 1e-14 * (1.0 + z[0].abs() + z[1].abs()) {
            break;
        }
    }
    let (w, m) = iterate_fj(f, z, mu, p)?;
    if ((w[0] - z[0]).powi(2) + (w[1] - z[1]).powi(2)).sqrt() > 1e-9 {
        return None;
    }
    // Minimal period.
    for dd in 1..p {
        if p % dd == 0 {
            let (v, _) = iterate_fj(f, z, mu, dd)?;
            if ((v[0] - z[0]).powi(2) + (v[1] - z[1]).powi(2)).sqrt() < 1e-8 {
                return None;
            }
        }
    }
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr / 4.0 - det;
    let rho = if disc >= 0.0 { (tr / 2.0).abs() + disc.sqrt() } else { det.abs().sqrt() };
    (rho < 1.0 - 1e-6).then_some((z, rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkInterval {
    pub left: f64,
    pub right: f64,
}

/// Longest run of parameters with an attracting period-`p` cycle on a
/// `samples`-point grid of `[mu_lo, mu_hi]`, endpoints refined by bisection.
pub fn sink_interval<F: PlanarFamily + ?Sized>(
    f: &F,
    p: usize,
    mu_lo: f64,
    mu_hi: f64,
    samples: usize,
    z0: impl Fn(f64) -> Point + Sync,
    n_iter: usize,
) -> Option<SinkInterval> {
    let grid = linspace(mu_lo, mu_hi, samples);
    let test = |mu: f64| attracting_cycle(f, mu, p, z0(mu), n_iter).is_some();
    let flags: Vec<bool> = grid.par_iter().map(|&m| test(m)).collect();
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < flags.len() {
        if flags[i] {
            let start = i;
            while i + 1 < flags.len() && flags[i + 1] {
                i += 1;
            }
            if best.is_none_or(|(s, e)| i - start > e - s) {
                best = Some((start, i));
            }
        }
        i += 1;
    }
    let (s, e) = best?;
    let refine = |mut good: f64, mut bad: f64| {
        for _ in 0..200 {
            if (good - bad).abs() <= 1e-12 {
                break;
            }
            let mid = 0.5 * (good + bad);
            if mid == good || mid == bad {
                break;
            }
            if test(mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        good
    };
    let left = if s > 0 { refine(grid[s], grid[s - 1]) } else { grid[s] };
    let right = if e + 1 < grid.len() { refine(grid[e], grid[e + 1]) } else { grid[e] };
    Some(SinkInterval { left, right })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterWindow {
    pub period: usize,
    pub n: usize,
    pub left: f64,
    pub right: f64,
    pub length: f64,
    /// Distance from the tangency parameter `mu = 0` to the window.
    pub distance: f64,
    pub sigma: f64,
    /// Predicted log-slopes of length and distance in `n`.
    pub predicted_exponents: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkScan {
    pub windows: Vec<ParameterWindow>,
    pub absent: Vec<usize>,
    pub length_fit: Option<LinearFit>,
    pub distance_fit: Option<LinearFit>,
}

pub struct SinkScanOptions {
    pub samples: usize,
    pub n_iter: usize,
    /// Normalized parameter range scanned for each `n`.
    pub a_range: [f64; 2],
}

impl Default for SinkScanOptions {
    fn default() -> Self {
        Self { samples: 400, n_iter: 20_000, a_range: [-2.0, 0.5] }
    }
}

/// For each `n`, the parameter window in which the unfolding has an
/// attracting cycle of period `n + N`, with scaling fits.
pub fn sink_window_scan(data: &TransitionData, ns: &[usize], opts: &SinkScanOptions) -> Result<SinkScan> {
    data.validate_shape()?;
    let mut windows = Vec::new();
    let mut absent = Vec::new();
    for &n in ns {
        let rm = ReturnMap::new(data, n);
        let lo = data.reparam_mn(n, opts.a_range[0] / data.xi)?;
        let hi = data.reparam_mn(n, opts.a_range[1] / data.xi)?;
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let start = |mu: f64| data.psi_inv(n, mu, [0.0, 0.0]);
        match sink_interval(&rm, 1, lo, hi, opts.samples, start, opts.n_iter) {
            Some(iv) => {
                let distance = if iv.left <= 0.0 && iv.right >= 0.0 { 0.0 } else { iv.left.abs().min(iv.right.abs()) };
                let s = data.sigma_at(0.5 * (iv.left + iv.right));
                windows.push(ParameterWindow {
                    period: n + data.n_transition,
                    n,
                    left: iv.left,
                    right: iv.right,
                    length: iv.right - iv.left,
                    distance,
                    sigma: s,
                    predicted_exponents: [-2.0 * s.ln(), -s.ln()],
                });
            }
            None => absent.push(n),
        }
    }
    let nf: Vec<f64> = windows.iter().map(|w| w.n as f64).collect();
    let ll: Vec<f64> = windows.iter().map(|w| w.length.ln()).collect();
    let ld: Vec<f64> = windows.iter().map(|w| w.distance.ln()).collect();
    Ok(SinkScan { length_fit: linear_fit(&nf, &ll), distance_fit: linear_fit(&nf, &ld), windows, absent })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mn_example() {
        let mut d = TransitionData::toy();
        d.sigma = vec![2.0];
        d.lambda = vec![0.25];
        let m = d.reparam_mn(2, 0.3).unwrap();
        assert!((m - (0.3 / 16.0 + 3.0 / 16.0)).abs() < 1e-15);
        let m0 = d.reparam_mn(0, 0.3).unwrap();
        assert!((m0 - (0.3 - 1.0 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn mn_inverts_a() {
        let mut d = TransitionData::toy();
        d.sigma = vec![2.0, 0.3];
        d.lambda = vec![0.1, -0.05];
        for &mt in &[-1.0, -0.3, 0.0, 0.7, 1.0] {
            let mu = d.reparam_mn(6, mt).unwrap();
            assert!((d.a_of_mu(6, mu) - d.xi * mt).abs() < 1e-12);
        }
    }

    #[test]
    fn e_conditions() {
        let d = TransitionData::toy();
        assert!(d.validate_e().pass);
        let cubic = Poly3::from_terms(&[(3, 0, 0, 1.0), (2, 0, 0, -3.0), (1, 0, 0, 3.0), (0, 0, 0, -1.0)]);
        assert!(d.clone().with_error(cubic, Poly3::constant(0.0)).validate_e().pass);
        let bad = d.with_error(Poly3::monomial(1, 0, 1, 1.0), Poly3::constant(0.0));
        let rep = bad.validate_e();
        assert!(!rep.pass);
        assert!(!rep.checks[0].pass && (rep.checks[0].residual - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_error_is_pure_henon() {
        let r = renormalize(&TransitionData::toy(), 5).unwrap();
        assert!((r.b - 0.2f64.powi(5)).abs() < 1e-18);
        let f = r.family.unwrap();
        assert!(f.pert_a.is_zero());
        assert!(f.pert_b.max_abs_coeff() < 1e-12);
    }
}
