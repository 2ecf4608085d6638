//! Renormalization, normal forms and hyperbolicity checks for dissipative
//! planar maps.
//!
//! The crate is organised around polynomial map families ([`family`]),
//! Chebyshev function approximation ([`cheb`]) and cone fields ([`cone`]).
//! On top of those sit the hyperbolicity certificates ([`hyperbolicity`]),
//! the normal-form pipeline for systems of charts ([`normal_forms`]), the
//! explicit renormalization of homoclinic unfoldings ([`renormalization`])
//! and the one-dimensional window combinatorics together with the Hénon
//! strip scan ([`windows`]).

pub mod cheb;
pub mod cone;
pub mod error;
pub mod family;
pub mod hyperbolicity;
pub mod normal_forms;
pub mod poly;
pub mod renormalization;
pub mod windows;

pub use error::{Error, Result};

/// A point of the plane.
pub type Point = [f64; 2];

/// Real 2x2 matrix.
pub type Mat2 = nalgebra::Matrix2<f64>;

/// Least-squares line `y = intercept + slope * x` with the standard error of
/// the slope.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(LinearFit { slope, intercept, slope_stderr, points: n })
}

/// Bisection on a continuous scalar function with `f(lo)` and `f(hi)` of
/// opposite signs.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::Bracket { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Evenly spaced samples including both endpoints.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (a + b)],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}
