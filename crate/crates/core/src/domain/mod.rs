//! Geometry of the four-dimensional domain and its discretizations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

mod field;
mod mesh;
mod solve;

pub use field::{Density, Field};
pub use mesh::{CloudMesh, CloudOptions, GridMesh, Mesh, RadialMesh, Resolution, SphereDesign};
pub use solve::{biharmonic_solve_navier, integrate, laplacian, log_integral_exp, poisson_solve, LogIntegral};

pub type Point = [f64; 4];

/// Optional predicate restricting a box to a sub-region centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoxMask {
    None,
    Ball { radius: f64 },
    Shell { inner: f64, outer: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Ball {
        radius: f64,
    },
    Shell {
        inner: f64,
        outer: f64,
    },
    /// Axis-aligned box centered at the origin; `extent` holds side lengths.
    Box4d {
        extent: [f64; 4],
        mask: BoxMask,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub shape: Shape,
    pub chi: i64,
    pub eta: f64,
}

impl DomainSpec {
    pub fn ball(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return invalid(format!("ball radius must be positive, got {radius}"));
        }
        Self::finish(Shape::Ball { radius }, 1)
    }

    pub fn shell(inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && inner < outer && outer.is_finite()) {
            return invalid(format!("shell needs 0 < r0 < r1, got r0={inner}, r1={outer}"));
        }
        Self::finish(Shape::Shell { inner, outer }, 0)
    }

    /// A box of the given side lengths. The Euler characteristic is
    /// declared by the caller since masks change the topology.
    pub fn box4d(extent: [f64; 4], mask: BoxMask, chi: i64) -> Result<Self> {
        if extent.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return invalid("box extents must be positive");
        }
        match mask {
            BoxMask::None => {}
            BoxMask::Ball { radius } if radius > 0.0 => {}
            BoxMask::Shell { inner, outer } if inner > 0.0 && inner < outer => {}
            _ => return invalid("malformed box mask"),
        }
        Self::finish(Shape::Box4d { extent, mask }, chi)
    }

    fn finish(shape: Shape, chi: i64) -> Result<Self> {
        let mut d = DomainSpec { shape, chi, eta: 0.0 };
        d.eta = d.inradius() / 10.0;
        Ok(d)
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < self.characteristic_size() / 4.0) {
            return invalid(format!("eta must lie in (0, size/4), got {eta}"));
        }
        self.eta = eta;
        Ok(self)
    }

    pub fn with_chi(mut self, chi: i64) -> Self {
        self.chi = chi;
        self
    }

    /// Radius of the largest ball contained in the domain.
    pub fn inradius(&self) -> f64 {
        match self.shape {
            Shape::Ball { radius } => radius,
            Shape::Shell { inner, outer } => (outer - inner) / 2.0,
            Shape::Box4d { extent, mask } => {
                let half = extent.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0;
                match mask {
                    BoxMask::None => half,
                    BoxMask::Ball { radius } => half.min(radius),
                    BoxMask::Shell { inner, outer } => ((outer.min(half) - inner) / 2.0).max(0.0),
                }
            }
        }
    }

    /// Diameter-like length used to bound `eta`.
    pub fn characteristic_size(&self) -> f64 {
        match self.shape {
            Shape::Ball { radius } => 2.0 * radius,
            Shape::Shell { inner, outer } => outer - inner,
            Shape::Box4d { .. } => 2.0 * self.inradius(),
        }
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.shape, Shape::Ball { .. } | Shape::Shell { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self.shape {
            Shape::Ball { .. } => "ball",
            Shape::Shell { .. } => "shell",
            Shape::Box4d { .. } => "box4d",
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        let r = norm4(x);
        match self.shape {
            Shape::Ball { radius } => r < radius,
            Shape::Shell { inner, outer } => r > inner && r < outer,
            Shape::Box4d { extent, mask } => {
                let in_box = x.iter().zip(&extent).all(|(xi, a)| xi.abs() < a / 2.0);
                in_box
                    && match mask {
                        BoxMask::None => true,
                        BoxMask::Ball { radius } => r < radius,
                        BoxMask::Shell { inner, outer } => r > inner && r < outer,
                    }
            }
        }
    }

    /// Euclidean distance to the boundary for points inside the domain
    /// (zero outside).
    pub fn boundary_distance(&self, x: &Point) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        let r = norm4(x);
        match self.shape {
            Shape::Ball { radius } => radius - r,
            Shape::Shell { inner, outer } => (r - inner).min(outer - r),
            Shape::Box4d { extent, mask } => {
                let to_box = x.iter().zip(&extent).map(|(xi, a)| a / 2.0 - xi.abs()).fold(f64::INFINITY, f64::min);
                match mask {
                    BoxMask::None => to_box,
                    BoxMask::Ball { radius } => to_box.min(radius - r),
                    BoxMask::Shell { inner, outer } => to_box.min(r - inner).min(outer - r),
                }
            }
        }
    }

    /// Closed-form volume where available; masked boxes whose mask pokes
    /// out of the box return `None`.
    pub fn exact_volume(&self) -> Option<f64> {
        let ball = |r: f64| PI * PI * r.powi(4) / 2.0;
        match self.shape {
            Shape::Ball { radius } => Some(ball(radius)),
            Shape::Shell { inner, outer } => Some(ball(outer) - ball(inner)),
            Shape::Box4d { extent, mask } => {
                let half = extent.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0;
                match mask {
                    BoxMask::None => Some(extent.iter().product()),
                    BoxMask::Ball { radius } if radius <= half => Some(ball(radius)),
                    BoxMask::Shell { inner, outer } if outer <= half => Some(ball(outer) - ball(inner)),
                    _ => None,
                }
            }
        }
    }

    /// Half side lengths of the smallest origin-centered box containing the domain.
    pub fn half_extents(&self) -> [f64; 4] {
        match self.shape {
            Shape::Ball { radius } => [radius; 4],
            Shape::Shell { outer, .. } => [outer; 4],
            Shape::Box4d { extent, .. } => [extent[0] / 2.0, extent[1] / 2.0, extent[2] / 2.0, extent[3] / 2.0],
        }
    }
}

pub fn norm4(x: &Point) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(x: &Point, y: &Point) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_boundary_distance() {
        let d = DomainSpec::shell(1.0, 2.0).unwrap();
        assert!((d.boundary_distance(&[1.5, 0.0, 0.0, 0.0]) - 0.5).abs() < 1e-15);
        assert_eq!(d.boundary_distance(&[0.5, 0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn defaults() {
        let b = DomainSpec::ball(1.0).unwrap();
        assert_eq!(b.chi, 1);
        assert!((b.eta - 0.1).abs() < 1e-15);
        let s = DomainSpec::shell(1.0, 2.0).unwrap();
        assert_eq!(s.chi, 0);
        assert!((s.eta - 0.05).abs() < 1e-15);
        assert!(DomainSpec::shell(2.0, 1.0).is_err());
        assert!(b.with_eta(0.6).is_err());
    }

    #[test]
    fn distance_basics() {
        let x = [0.1, -0.2, 0.3, 0.4];
        let y = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(dist(&x, &x), 0.0);
        assert_eq!(dist(&x, &y), dist(&y, &x));
    }

    #[test]
    fn masked_box_volume() {
        let d = DomainSpec::box4d([2.0; 4], BoxMask::Ball { radius: 0.9 }, 1).unwrap();
        assert!((d.exact_volume().unwrap() - PI * PI * 0.9f64.powi(4) / 2.0).abs() < 1e-14);
        assert!((d.inradius() - 0.9).abs() < 1e-15);
    }
}
