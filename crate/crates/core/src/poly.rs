//! Dense trivariate polynomials in `(x, y, mu)` with exact calculus.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Polynomial `sum c[i][j][k] x^i y^j mu^k` stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly3 {
    degs: [usize; 3],
    coeffs: Vec<f64>,
}

impl Poly3 {
    pub fn zeros(degs: [usize; 3]) -> Self {
        let n = (degs[0] + 1) * (degs[1] + 1) * (degs[2] + 1);
        Self { degs, coeffs: vec![0.0; n] }
    }

    pub fn constant(c: f64) -> Self {
        Self { degs: [0, 0, 0], coeffs: vec![c] }
    }

    pub fn monomial(i: usize, j: usize, k: usize, c: f64) -> Self {
        let mut p = Self::zeros([i, j, k]);
        p.set(i, j, k, c);
        p
    }

    pub fn x() -> Self {
        Self::monomial(1, 0, 0, 1.0)
    }

    pub fn y() -> Self {
        Self::monomial(0, 1, 0, 1.0)
    }

    pub fn mu() -> Self {
        Self::monomial(0, 0, 1, 1.0)
    }

    /// Builds from `(i, j, k, c)` terms; repeated indices accumulate.
    pub fn from_terms(terms: &[(usize, usize, usize, f64)]) -> Self {
        let mut degs = [0; 3];
        for &(i, j, k, _) in terms {
            degs = [degs[0].max(i), degs[1].max(j), degs[2].max(k)];
        }
        let mut p = Self::zeros(degs);
        for &(i, j, k, c) in terms {
            let v = p.get(i, j, k);
            p.set(i, j, k, v + c);
        }
        p
    }

    /// Builds from a nested `[x][y][mu]` coefficient array.
    pub fn from_nested(nested: &[Vec<Vec<f64>>]) -> Option<Self> {
        let dx = nested.len().checked_sub(1)?;
        let dy = nested[0].len().checked_sub(1)?;
        let dm = nested[0][0].len().checked_sub(1)?;
        let mut p = Self::zeros([dx, dy, dm]);
        for (i, plane) in nested.iter().enumerate() {
            if plane.len() != dy + 1 {
                return None;
            }
            for (j, row) in plane.iter().enumerate() {
                if row.len() != dm + 1 {
                    return None;
                }
                for (k, &c) in row.iter().enumerate() {
                    p.set(i, j, k, c);
                }
            }
        }
        Some(p)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..=self.degs[0])
            .map(|i| {
                (0..=self.degs[1])
                    .map(|j| (0..=self.degs[2]).map(|k| self.get(i, j, k)).collect())
                    .collect()
            })
            .collect()
    }

    pub fn degs(&self) -> [usize; 3] {
        self.degs
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * (self.degs[1] + 1) + j) * (self.degs[2] + 1) + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        if i > self.degs[0] || j > self.degs[1] || k > self.degs[2] {
            0.0
        } else {
            self.coeffs[self.idx(i, j, k)]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, c: f64) {
        let id = self.idx(i, j, k);
        self.coeffs[id] = c;
    }

    /// Nonzero terms as `(i, j, k, c)`.
    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        let [dx, dy, dm] = self.degs;
        (0..=dx).flat_map(move |i| {
            (0..=dy).flat_map(move |j| {
                (0..=dm).filter_map(move |k| {
                    let c = self.get(i, j, k);
                    (c != 0.0).then_some((i, j, k, c))
                })
            })
        })
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn total_degree(&self) -> usize {
        self.terms().map(|(i, j, k, _)| i + j + k).max().unwrap_or(0)
    }

    /// Drops trailing all-zero slices so that declared degrees are tight.
    pub fn trimmed(&self) -> Self {
        let mut degs = [0; 3];
        for (i, j, k, _) in self.terms() {
            degs = [degs[0].max(i), degs[1].max(j), degs[2].max(k)];
        }
        let mut p = Self::zeros(degs);
        for (i, j, k, c) in self.terms() {
            p.set(i, j, k, c);
        }
        p
    }

    fn resized(&self, degs: [usize; 3]) -> Self {
        let mut p = Self::zeros(degs);
        for (i, j, k, c) in self.terms() {
            p.set(i, j, k, c);
        }
        p
    }

    pub fn eval(&self, x: f64, y: f64, mu: f64) -> f64 {
        let [dx, dy, dm] = self.degs;
        let mut acc_x = 0.0;
        for i in (0..=dx).rev() {
            let mut acc_y = 0.0;
            for j in (0..=dy).rev() {
                let base = self.idx(i, j, 0);
                let mut acc_m = 0.0;
                for k in (0..=dm).rev() {
                    acc_m = acc_m * mu + self.coeffs[base + k];
                }
                acc_y = acc_y * y + acc_m;
            }
            acc_x = acc_x * x + acc_y;
        }
        acc_x
    }

    /// Partial derivative along axis 0 (x), 1 (y) or 2 (mu).
    pub fn deriv(&self, axis: usize) -> Self {
        let mut degs = self.degs;
        if degs[axis] == 0 {
            return Self::zeros([0, 0, 0]);
        }
        degs[axis] -= 1;
        let mut p = Self::zeros(degs);
        for (i, j, k, c) in self.terms() {
            let e = [i, j, k];
            if e[axis] == 0 {
                continue;
            }
            let mut t = e;
            t[axis] -= 1;
            p.set(t[0], t[1], t[2], c * e[axis] as f64);
        }
        p
    }

    /// Mixed partial `d_x^i d_y^j d_mu^k`.
    pub fn partial(&self, i: usize, j: usize, k: usize) -> Self {
        let mut p = self.clone();
        for _ in 0..i {
            p = p.deriv(0);
        }
        for _ in 0..j {
            p = p.deriv(1);
        }
        for _ in 0..k {
            p = p.deriv(2);
        }
        p
    }

    pub fn add(&self, other: &Self) -> Self {
        let degs = [
            self.degs[0].max(other.degs[0]),
            self.degs[1].max(other.degs[1]),
            self.degs[2].max(other.degs[2]),
        ];
        let mut p = self.resized(degs);
        for (i, j, k, c) in other.terms() {
            let v = p.get(i, j, k);
            p.set(i, j, k, v + c);
        }
        p
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { degs: self.degs, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let degs = [
            self.degs[0] + other.degs[0],
            self.degs[1] + other.degs[1],
            self.degs[2] + other.degs[2],
        ];
        let mut p = Self::zeros(degs);
        let rhs: Vec<_> = other.terms().collect();
        for (i, j, k, c) in self.terms() {
            for &(a, b, d, e) in &rhs {
                let id = p.idx(i + a, j + b, k + d);
                p.coeffs[id] += c * e;
            }
        }
        p
    }

    pub fn pow(&self, n: usize) -> Self {
        let mut acc = Self::constant(1.0);
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    /// Substitutes `x -> px`, `y -> py`, `mu -> pm`.
    pub fn compose(&self, px: &Self, py: &Self, pm: &Self) -> Self {
        let [dx, dy, dm] = self.degs;
        let pows = |p: &Self, n: usize| {
            let mut v = vec![Self::constant(1.0)];
            for _ in 0..n {
                let next = v.last().unwrap().mul(p);
                v.push(next);
            }
            v
        };
        let xs = pows(px, dx);
        let ys = pows(py, dy);
        let ms = pows(pm, dm);
        let mut acc = Self::constant(0.0);
        for i in 0..=dx {
            for j in 0..=dy {
                let mut inner = Self::constant(0.0);
                let mut any = false;
                for k in 0..=dm {
                    let c = self.get(i, j, k);
                    if c != 0.0 {
                        inner = inner.add(&ms[k].scale(c));
                        any = true;
                    }
                }
                if any {
                    acc = acc.add(&xs[i].mul(&ys[j]).mul(&inner));
                }
            }
        }
        acc.trimmed()
    }

    /// Substitutes `x -> sx*x + tx`, `y -> sy*y + ty`, `mu -> sm*mu + tm`.
    pub fn affine_substitute(&self, s: [f64; 3], t: [f64; 3]) -> Self {
        let lin = |axis: usize| {
            let mut v = Self::constant(t[axis]);
            let mut e = [0, 0, 0];
            e[axis] = 1;
            v = v.add(&Self::monomial(e[0], e[1], e[2], s[axis]));
            v
        };
        self.compose(&lin(0), &lin(1), &lin(2))
    }

    /// Freezes `mu` at a value, leaving a polynomial in `(x, y)`.
    pub fn at_mu(&self, mu: f64) -> Self {
        let [dx, dy, dm] = self.degs;
        let mut p = Self::zeros([dx, dy, 0]);
        for i in 0..=dx {
            for j in 0..=dy {
                let mut acc = 0.0;
                for k in (0..=dm).rev() {
                    acc = acc * mu + self.get(i, j, k);
                }
                p.set(i, j, 0, acc);
            }
        }
        p
    }
}

impl Serialize for Poly3 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            coeffs: Vec<Vec<Vec<f64>>>,
            degs: [usize; 3],
        }
        Repr { coeffs: self.to_nested(), degs: self.degs }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Poly3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Repr {
            coeffs: Vec<Vec<Vec<f64>>>,
            degs: [usize; 3],
        }
        let r = Repr::deserialize(d)?;
        let p = Poly3::from_nested(&r.coeffs)
            .ok_or_else(|| D::Error::custom("ragged coefficient array"))?;
        if p.degs != r.degs {
            return Err(D::Error::custom(format!(
                "coefficient array has degrees {:?} but {:?} were declared",
                p.degs, r.degs
            )));
        }
        Ok(p)
    }
}

/// Truncated power series helpers in one variable.
pub mod series {
    pub fn mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, &ai) in a.iter().enumerate().take(n) {
            if ai == 0.0 {
                continue;
            }
            for (j, &bj) in b.iter().enumerate().take(n - i) {
                out[i + j] += ai * bj;
            }
        }
        out
    }

    pub fn eval(a: &[f64], s: f64) -> f64 {
        a.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn deriv_eval(a: &[f64], s: f64) -> f64 {
        a.iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * s + k as f64 * c)
    }
}
