//! Cone fields: an open interval of projective directions at each point.

use crate::cheb::ChebFn2;
use crate::error::{Error, Result};
use crate::Point;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterAngle {
    Constant(f64),
    Field(ChebFn2),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeField {
    pub center: CenterAngle,
    pub half_width: f64,
    pub domain: [f64; 4],
}

/// Unsigned angle between two lines through the origin, in `[0, pi/2]`.
pub fn projective_angle(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

pub fn direction_angle(v: Point) -> f64 {
    v[1].atan2(v[0])
}

pub fn unit(theta: f64) -> Point {
    [theta.cos(), theta.sin()]
}

impl ConeField {
    pub fn new(center: CenterAngle, half_width: f64, domain: [f64; 4]) -> Result<Self> {
        if !(half_width > 0.0 && half_width < FRAC_PI_2) {
            return Err(Error::Invalid(format!("cone half-width {half_width} not in (0, pi/2)")));
        }
        Ok(Self { center, half_width, domain })
    }

    pub fn horizontal(half_width: f64, domain: [f64; 4]) -> Result<Self> {
        Self::new(CenterAngle::Constant(0.0), half_width, domain)
    }

    pub fn center_angle(&self, z: Point) -> f64 {
        match &self.center {
            CenterAngle::Constant(t) => *t,
            CenterAngle::Field(f) => f.eval(z[0], z[1]),
        }
    }

    /// Signed angular slack: positive inside the cone, negative outside.
    pub fn slack(&self, z: Point, v: Point) -> f64 {
        self.half_width - projective_angle(direction_angle(v), self.center_angle(z))
    }

    pub fn contains(&self, z: Point, v: Point) -> bool {
        self.slack(z, v) > 0.0
    }

    /// Center, the two boundary directions and `interior` evenly spaced
    /// directions strictly between them.
    pub fn test_directions(&self, z: Point, interior: usize) -> Vec<Point> {
        let c = self.center_angle(z);
        let w = self.half_width;
        let mut out = vec![unit(c), unit(c - w), unit(c + w)];
        for i in 1..=interior {
            let t = -w + 2.0 * w * i as f64 / (interior + 1) as f64;
            out.push(unit(c + t));
        }
        out
    }
}
