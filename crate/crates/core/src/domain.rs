//! Smooth convex domains `G = {phi > 0}` with `grad phi` the inward unit
//! normal on the boundary.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    Interval { a: f64, b: f64 },
    Ball { center: Vec<f64>, r: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothDomain {
    shape: Shape,
    /// Mollification radius of the distance function.
    rho: f64,
    boundary_tol: f64,
}

/// C^2 even function equal to `|u|` for `|u| >= rho`.
fn smooth_abs(u: f64, rho: f64) -> (f64, f64, f64) {
    let a = u.abs();
    if a >= rho {
        (a, u.signum(), 0.0)
    } else {
        let q = u / rho;
        (
            rho * (0.375 + 0.75 * q * q - 0.125 * q.powi(4)),
            1.5 * q - 0.5 * q.powi(3),
            (1.5 - 1.5 * q * q) / rho,
        )
    }
}

impl SmoothDomain {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidInput(format!("interval needs a < b, got ({a}, {b})")));
        }
        Ok(SmoothDomain {
            shape: Shape::Interval { a, b },
            rho: (b - a) / 4.0,
            boundary_tol: 1e-9 * (b - a),
        })
    }

    pub fn ball(center: Vec<f64>, r: f64) -> Result<Self> {
        if center.is_empty() || !(r > 0.0 && r.is_finite()) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("ball needs a finite center and a positive radius".into()));
        }
        Ok(SmoothDomain {
            shape: Shape::Ball { center, r },
            rho: r / 4.0,
            boundary_tol: 2e-9 * r,
        })
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Interval { .. } => 1,
            Shape::Ball { center, .. } => center.len(),
        }
    }

    pub fn boundary_tol(&self) -> f64 {
        self.boundary_tol
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => b - a,
            Shape::Ball { r, .. } => 2.0 * r,
        }
    }

    /// `(a, b)` for interval domains.
    pub fn interval_bounds(&self) -> Option<(f64, f64)> {
        match self.shape {
            Shape::Interval { a, b } => Some((a, b)),
            _ => None,
        }
    }

    /// Coordinate-wise bounds of the closure.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        match &self.shape {
            Shape::Interval { a, b } => vec![(*a, *b)],
            Shape::Ball { center, r } => center.iter().map(|c| (c - r, c + r)).collect(),
        }
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => 0.5 * (b - a) - smooth_abs(x[0] - 0.5 * (a + b), self.rho).0,
            Shape::Ball { center, r } => r - smooth_abs(dist(x, center), self.rho).0,
        }
    }

    pub fn grad_phi(&self, x: &[f64], out: &mut [f64]) {
        match &self.shape {
            Shape::Interval { a, b } => out[0] = -smooth_abs(x[0] - 0.5 * (a + b), self.rho).1,
            Shape::Ball { center, .. } => {
                let psi = self.radial(dist(x, center)).0;
                for i in 0..center.len() {
                    out[i] = -psi * (x[i] - center[i]);
                }
            }
        }
    }

    /// Row-major `n x n`.
    pub fn hess_phi(&self, x: &[f64], out: &mut [f64]) {
        match &self.shape {
            Shape::Interval { a, b } => out[0] = -smooth_abs(x[0] - 0.5 * (a + b), self.rho).2,
            Shape::Ball { center, .. } => {
                let n = center.len();
                let (psi, dpsi_over_r) = self.radial(dist(x, center));
                for i in 0..n {
                    for j in 0..n {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        out[i * n + j] = -psi * delta - dpsi_over_r * (x[i] - center[i]) * (x[j] - center[j]);
                    }
                }
            }
        }
    }

    /// `(s'(r)/r, (s'(r)/r)'/r)` for the mollified radial distance.
    fn radial(&self, r: f64) -> (f64, f64) {
        let rho = self.rho;
        if r >= rho {
            (1.0 / r, -1.0 / (r * r * r))
        } else {
            ((1.5 - 0.5 * r * r / (rho * rho)) / rho, -1.0 / (rho * rho * rho))
        }
    }

    pub fn classify(&self, x: &[f64]) -> Location {
        let p = self.phi(x);
        if p > self.boundary_tol {
            Location::Interior
        } else if p >= -self.boundary_tol {
            Location::Boundary
        } else {
            Location::Exterior
        }
    }

    pub fn contains_closure(&self, x: &[f64]) -> bool {
        self.classify(x) != Location::Exterior
    }

    /// Euclidean projection onto the closed domain; returns the distance
    /// moved.
    pub fn project(&self, x: &mut [f64]) -> f64 {
        match &self.shape {
            Shape::Interval { a, b } => {
                let p = x[0].clamp(*a, *b);
                let moved = (x[0] - p).abs();
                x[0] = p;
                moved
            }
            Shape::Ball { center, r } => {
                let dd = dist(x, center);
                if dd <= *r {
                    0.0
                } else {
                    for i in 0..center.len() {
                        x[i] = center[i] + (x[i] - center[i]) * (r / dd);
                    }
                    dd - r
                }
            }
        }
    }

    pub fn inward_normal(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.classify(x) != Location::Boundary {
            return Err(Error::NotOnBoundary);
        }
        let mut n = vec![0.0; self.dim()];
        self.grad_phi(x, &mut n);
        Ok(n)
    }
}

fn dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

impl FromStr for SmoothDomain {
    type Err = Error;

    /// `interval(a,b)` or `ball(c1,...,cn,r)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("cannot parse domain `{s}`; expected interval(a,b) or ball(c..., r)"));
        let open = s.find('(').ok_or_else(bad)?;
        if !s.ends_with(')') {
            return Err(bad());
        }
        let name = s[..open].trim();
        let args: Vec<f64> = s[open + 1..s.len() - 1]
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        match (name, args.len()) {
            ("interval", 2) => SmoothDomain::interval(args[0], args[1]).map_err(|e| Error::Config(e.to_string())),
            ("ball", m) if m >= 2 => {
                SmoothDomain::ball(args[..m - 1].to_vec(), args[m - 1]).map_err(|e| Error::Config(e.to_string()))
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for SmoothDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.shape {
            Shape::Interval { a, b } => write!(f, "interval({a},{b})"),
            Shape::Ball { center, r } => {
                write!(f, "ball(")?;
                for c in center {
                    write!(f, "{c},")?;
                }
                write!(f, "{r})")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mollified_phi_is_c2() {
        // second derivative continuous across the mollification radius
        let d = SmoothDomain::interval(0.0, 1.0).unwrap();
        let mut h = [0.0];
        for x in [0.25 - 1e-9, 0.25 + 1e-9, 0.75 - 1e-9, 0.75 + 1e-9] {
            d.hess_phi(&[x], &mut h);
            assert!(h[0].abs() < 1e-6, "x = {x}: {}", h[0]);
        }
        let b = SmoothDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let mut g = [0.0; 2];
        b.grad_phi(&[0.0, 0.0], &mut g);
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn parse_round_trip() {
        let d: SmoothDomain = "ball(0, 0, 2)".parse().unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(d.to_string().parse::<SmoothDomain>().unwrap(), d);
        assert!("square(1)".parse::<SmoothDomain>().is_err());
    }
}
