//! Chebyshev expansions on intervals and boxes.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const DEFAULT_DEGREE: usize = 64;

/// First-kind Chebyshev nodes on `[a, b]`, in decreasing order.
pub fn nodes(domain: [f64; 2], n: usize) -> Vec<f64> {
    let (a, b) = (domain[0], domain[1]);
    (0..n)
        .map(|k| {
            let t = (PI * (k as f64 + 0.5) / n as f64).cos();
            0.5 * (a + b) + 0.5 * (b - a) * t
        })
        .collect()
}

/// Coefficients from values at [`nodes`].
fn dct(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut c = vec![0.0; n];
    for (j, cj) in c.iter_mut().enumerate() {
        let mut s = 0.0;
        for (k, v) in values.iter().enumerate() {
            s += v * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos();
        }
        *cj = 2.0 * s / n as f64;
    }
    c[0] *= 0.5;
    c
}

#[inline]
fn clenshaw(c: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c.first().copied().unwrap_or(0.0)
}

fn deriv_coeffs(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    if n <= 1 {
        return vec![0.0];
    }
    let mut d = vec![0.0; n + 1];
    for k in (1..n).rev() {
        d[k - 1] = d[k + 1] + 2.0 * k as f64 * c[k];
    }
    d.truncate(n - 1);
    d[0] *= 0.5;
    d
}

/// Chebyshev expansion of a function on an interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebFn {
    pub domain: [f64; 2],
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub norm: f64,
    pub under_resolved: bool,
}

impl ChebFn {
    pub fn fit<F: Fn(f64) -> f64>(f: F, domain: [f64; 2], degree: usize) -> Self {
        let xs = nodes(domain, degree + 1);
        let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        Self::from_node_values(domain, &vals)
    }

    pub fn from_node_values(domain: [f64; 2], values: &[f64]) -> Self {
        Self { domain, coeffs: dct(values) }
    }

    pub fn constant(domain: [f64; 2], c: f64) -> Self {
        Self { domain, coeffs: vec![c] }
    }

    pub fn identity(domain: [f64; 2]) -> Self {
        let (a, b) = (domain[0], domain[1]);
        Self { domain, coeffs: vec![0.5 * (a + b), 0.5 * (b - a)] }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    #[inline]
    fn to_unit(&self, x: f64) -> f64 {
        (2.0 * x - self.domain[0] - self.domain[1]) / (self.domain[1] - self.domain[0])
    }

    /// Evaluates the expansion; outside the domain this is polynomial
    /// continuation.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        clenshaw(&self.coeffs, self.to_unit(x))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.domain[0] && x <= self.domain[1]
    }

    /// Like [`Self::eval`] inside the domain, continued by the tangent line
    /// at the nearest endpoint outside it.
    pub fn eval_extended(&self, x: f64) -> f64 {
        if self.contains(x) {
            return self.eval(x);
        }
        let right = x > self.domain[1];
        let end = if right { self.domain[1] } else { self.domain[0] };
        // T_k(1) = 1, T_k'(1) = k^2, T_k(-1) = (-1)^k, T_k'(-1) = (-1)^(k+1) k^2.
        let (mut v, mut d) = (0.0, 0.0);
        for (k, c) in self.coeffs.iter().enumerate() {
            let sign = if right || k % 2 == 0 { 1.0 } else { -1.0 };
            v += sign * c;
            d -= if right { -c } else { sign * c } * (k * k) as f64;
        }
        let d = d * 2.0 / (self.domain[1] - self.domain[0]);
        v + d * (x - end)
    }

    pub fn deriv(&self) -> Self {
        let s = 2.0 / (self.domain[1] - self.domain[0]);
        let d = deriv_coeffs(&self.coeffs);
        Self { domain: self.domain, coeffs: d.into_iter().map(|c| c * s).collect() }
    }

    /// Antiderivative vanishing at `x0`.
    pub fn integral(&self, x0: f64) -> Self {
        let c = &self.coeffs;
        let n = c.len();
        let at = |k: usize| c.get(k).copied().unwrap_or(0.0);
        let mut out = vec![0.0; n + 1];
        out[1] = at(0) - 0.5 * at(2);
        for (k, o) in out.iter_mut().enumerate().skip(2) {
            *o = (at(k - 1) - at(k + 1)) / (2.0 * k as f64);
        }
        let s = 0.5 * (self.domain[1] - self.domain[0]);
        out.iter_mut().for_each(|v| *v *= s);
        let mut f = Self { domain: self.domain, coeffs: out };
        f.coeffs[0] = -f.eval(x0);
        f
    }

    pub fn coeff_mass(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    /// True when the last quarter of the coefficients carries more than 1%
    /// of the total absolute mass.
    pub fn under_resolved(&self) -> bool {
        let n = self.coeffs.len();
        if n < 4 {
            return false;
        }
        let total = self.coeff_mass();
        if total == 0.0 {
            return false;
        }
        let tail: f64 = self.coeffs[n - n / 4..].iter().map(|c| c.abs()).sum();
        tail > 0.01 * total
    }

    /// Drops trailing coefficients below `tol` relative to the mass.
    pub fn chopped(&self, tol: f64) -> Self {
        let m = self.coeff_mass().max(f64::MIN_POSITIVE);
        let mut n = self.coeffs.len();
        while n > 1 && self.coeffs[n - 1].abs() <= tol * m {
            n -= 1;
        }
        Self { domain: self.domain, coeffs: self.coeffs[..n].to_vec() }
    }

    fn oversampled_grid(&self) -> Vec<f64> {
        let m = 4 * (self.coeffs.len().max(2)) + 1;
        crate::linspace(self.domain[0], self.domain[1], m)
    }

    pub fn sup_norm(&self) -> f64 {
        self.oversampled_grid().iter().fold(0.0, |m, &x| m.max(self.eval(x).abs()))
    }

    /// `max_{d <= order} sup |f^{(d)}|` on a 4x oversampled grid.
    pub fn cr_norm(&self, order: usize) -> NormReport {
        let mut g = self.clone();
        let mut norm: f64 = 0.0;
        for d in 0..=order {
            if d > 0 {
                g = g.deriv();
            }
            norm = norm.max(g.sup_norm());
        }
        NormReport { norm, under_resolved: self.under_resolved() }
    }

    /// Sup of `|self - other|` over the oversampled grid of `self`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.oversampled_grid()
            .iter()
            .fold(0.0, |m, &x| m.max((self.eval(x) - other.eval(x)).abs()))
    }
}

pub fn cheb_fit<F: Fn(f64) -> f64>(f: F, domain: [f64; 2], degree: usize) -> ChebFn {
    ChebFn::fit(f, domain, degree.max(4))
}

pub fn cheb_cr_norm(g: &ChebFn, order: usize) -> NormReport {
    g.cr_norm(order)
}

/// Tensor Chebyshev expansion on a box `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebFn2 {
    pub domain: [f64; 4],
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `coeffs[i * ny + j]` multiplies `T_i(x) T_j(y)`.
    pub coeffs: Vec<f64>,
}

impl ChebFn2 {
    pub fn node_grid(domain: [f64; 4], nx: usize, ny: usize) -> (Vec<f64>, Vec<f64>) {
        (nodes([domain[0], domain[1]], nx), nodes([domain[2], domain[3]], ny))
    }

    pub fn fit<F: Fn(f64, f64) -> f64>(f: F, domain: [f64; 4], dx: usize, dy: usize) -> Self {
        let (xs, ys) = Self::node_grid(domain, dx + 1, dy + 1);
        let mut vals = vec![0.0; xs.len() * ys.len()];
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                vals[i * ys.len() + j] = f(x, y);
            }
        }
        Self::from_node_values(domain, xs.len(), ys.len(), &vals)
    }

    /// `values[i * ny + j]` is the value at `(xs[i], ys[j])` of [`Self::node_grid`].
    pub fn from_node_values(domain: [f64; 4], nx: usize, ny: usize, values: &[f64]) -> Self {
        let mut tmp = vec![0.0; nx * ny];
        for i in 0..nx {
            let row = dct(&values[i * ny..(i + 1) * ny]);
            tmp[i * ny..(i + 1) * ny].copy_from_slice(&row);
        }
        let mut coeffs = vec![0.0; nx * ny];
        let mut col = vec![0.0; nx];
        for j in 0..ny {
            for i in 0..nx {
                col[i] = tmp[i * ny + j];
            }
            let c = dct(&col);
            for i in 0..nx {
                coeffs[i * ny + j] = c[i];
            }
        }
        Self { domain, nx, ny, coeffs }
    }

    pub fn zero(domain: [f64; 4]) -> Self {
        Self { domain, nx: 1, ny: 1, coeffs: vec![0.0] }
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let d = &self.domain;
        let tx = (2.0 * x - d[0] - d[1]) / (d[1] - d[0]);
        let ty = (2.0 * y - d[2] - d[3]) / (d[3] - d[2]);
        // Clenshaw along x of the y-Clenshaw sums.
        let (mut b1, mut b2) = (0.0, 0.0);
        for i in (1..self.nx).rev() {
            let ci = clenshaw(&self.coeffs[i * self.ny..(i + 1) * self.ny], ty);
            let b0 = 2.0 * tx * b1 - b2 + ci;
            b2 = b1;
            b1 = b0;
        }
        tx * b1 - b2 + clenshaw(&self.coeffs[..self.ny], ty)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let d = &self.domain;
        x >= d[0] && x <= d[1] && y >= d[2] && y <= d[3]
    }

    pub fn deriv_x(&self) -> Self {
        let s = 2.0 / (self.domain[1] - self.domain[0]);
        let nx = self.nx.saturating_sub(1).max(1);
        let mut coeffs = vec![0.0; nx * self.ny];
        let mut col = vec![0.0; self.nx];
        for j in 0..self.ny {
            for i in 0..self.nx {
                col[i] = self.coeffs[i * self.ny + j];
            }
            let d = deriv_coeffs(&col);
            for (i, v) in d.iter().enumerate().take(nx) {
                coeffs[i * self.ny + j] = v * s;
            }
        }
        Self { domain: self.domain, nx, ny: self.ny, coeffs }
    }

    pub fn deriv_y(&self) -> Self {
        let s = 2.0 / (self.domain[3] - self.domain[2]);
        let ny = self.ny.saturating_sub(1).max(1);
        let mut coeffs = vec![0.0; self.nx * ny];
        for i in 0..self.nx {
            let d = deriv_coeffs(&self.coeffs[i * self.ny..(i + 1) * self.ny]);
            for (j, v) in d.iter().enumerate().take(ny) {
                coeffs[i * ny + j] = v * s;
            }
        }
        Self { domain: self.domain, nx: self.nx, ny, coeffs }
    }

    pub fn sup_on_grid(&self, n: usize) -> f64 {
        let xs = crate::linspace(self.domain[0], self.domain[1], n);
        let ys = crate::linspace(self.domain[2], self.domain[3], n);
        let mut m: f64 = 0.0;
        for &x in &xs {
            for &y in &ys {
                m = m.max(self.eval(x, y).abs());
            }
        }
        m
    }
}
