//! Star-shaped domains and their boundary geometry.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Boundary of a star-shaped planar domain in polar form `r = ρ(φ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RadialProfile {
    /// `ρ(φ) = a0 + Σ_k (cos[k-1] cos kφ + sin[k-1] sin kφ)`.
    Fourier {
        a0: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
    /// Ellipse with semi-axes `a` (along x) and `b` (along y).
    Ellipse { a: f64, b: f64 },
}

impl RadialProfile {
    pub fn disk(radius: f64) -> Self {
        RadialProfile::Fourier {
            a0: radius,
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    /// `base + amp·cos(mode·φ)`.
    pub fn star(base: f64, amp: f64, mode: usize) -> Self {
        let mut cos = vec![0.0; mode];
        if mode > 0 {
            cos[mode - 1] = amp;
        }
        RadialProfile::Fourier {
            a0: base,
            cos,
            sin: Vec::new(),
        }
    }

    /// `(ρ, ρ', ρ'')` at angle `phi`.
    pub fn eval(&self, phi: f64) -> (f64, f64, f64) {
        match self {
            RadialProfile::Fourier { a0, cos, sin } => {
                let mut r = (*a0, 0.0, 0.0);
                for (k, c) in cos.iter().enumerate() {
                    let kf = (k + 1) as f64;
                    let (s, co) = (kf * phi).sin_cos();
                    r.0 += c * co;
                    r.1 -= c * kf * s;
                    r.2 -= c * kf * kf * co;
                }
                for (k, c) in sin.iter().enumerate() {
                    let kf = (k + 1) as f64;
                    let (s, co) = (kf * phi).sin_cos();
                    r.0 += c * s;
                    r.1 += c * kf * co;
                    r.2 -= c * kf * kf * s;
                }
                r
            }
            RadialProfile::Ellipse { a, b } => {
                let (s, c) = phi.sin_cos();
                let q = b * b * c * c + a * a * s * s;
                let dq = (a * a - b * b) * (2.0 * phi).sin();
                let ddq = 2.0 * (a * a - b * b) * (2.0 * phi).cos();
                let ab = a * b;
                let rho = ab / q.sqrt();
                let d1 = -0.5 * ab * q.powf(-1.5) * dq;
                let d2 = 0.75 * ab * q.powf(-2.5) * dq * dq - 0.5 * ab * q.powf(-1.5) * ddq;
                (rho, d1, d2)
            }
        }
    }

    pub fn rho(&self, phi: f64) -> f64 {
        self.eval(phi).0
    }

    /// Point on the boundary curve.
    pub fn point(&self, phi: f64) -> [f64; 2] {
        let r = self.rho(phi);
        [r * phi.cos(), r * phi.sin()]
    }

    /// Exterior unit normal of the boundary curve.
    pub fn normal(&self, phi: f64) -> [f64; 2] {
        let (r, dr, _) = self.eval(phi);
        let (s, c) = phi.sin_cos();
        // r e_φ - r' e_⊥
        let v = [r * c + dr * s, r * s - dr * c];
        let len = v[0].hypot(v[1]);
        [v[0] / len, v[1] / len]
    }

    /// Signed curvature of the boundary curve (positive where convex).
    pub fn boundary_curvature(&self, phi: f64) -> f64 {
        let (r, d1, d2) = self.eval(phi);
        (r * r + 2.0 * d1 * d1 - r * d2) / (r * r + d1 * d1).powf(1.5)
    }

    /// `x·N` on the boundary; positive for strictly star-shaped domains.
    pub fn support(&self, phi: f64) -> f64 {
        let (r, d1, _) = self.eval(phi);
        r * r / (r * r + d1 * d1).sqrt()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let r = p[0].hypot(p[1]);
        r < self.rho(p[1].atan2(p[0]))
    }

    /// Largest radial extent, sampled finely.
    pub fn max_rho(&self) -> f64 {
        (0..4096)
            .map(|i| self.rho(2.0 * PI * i as f64 / 4096.0))
            .fold(0.0, f64::max)
    }

    /// True when the boundary has nonnegative mean curvature everywhere.
    pub fn mean_convex(&self) -> bool {
        (0..4096).all(|i| self.boundary_curvature(2.0 * PI * i as f64 / 4096.0) >= -1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// `[-d, d]` for the one-dimensional problem.
    Interval { half_width: f64 },
    /// Planar domain star-shaped about the origin.
    StarShaped(RadialProfile),
}

/// Discretization target: shape plus grid resolution. `n_r` counts radial
/// nodes including the boundary row (for intervals it is the number of cells);
/// `n_phi` is ignored for intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub shape: Shape,
    pub n_r: usize,
    pub n_phi: usize,
}

impl Domain {
    pub fn new(shape: Shape, n_r: usize, n_phi: usize) -> Result<Self, GeometryError> {
        let d = Self { shape, n_r, n_phi };
        d.validate()?;
        Ok(d)
    }

    pub fn disk(radius: f64, n_r: usize, n_phi: usize) -> Result<Self, GeometryError> {
        Self::new(Shape::StarShaped(RadialProfile::disk(radius)), n_r, n_phi)
    }

    pub fn interval(half_width: f64, n: usize) -> Result<Self, GeometryError> {
        Self::new(Shape::Interval { half_width }, n, 0)
    }

    pub fn dim(&self) -> usize {
        match self.shape {
            Shape::Interval { .. } => 1,
            Shape::StarShaped(_) => 2,
        }
    }

    pub fn profile(&self) -> Option<&RadialProfile> {
        match &self.shape {
            Shape::StarShaped(p) => Some(p),
            Shape::Interval { .. } => None,
        }
    }

    /// Largest distance from the origin to the boundary.
    pub fn max_extent(&self) -> f64 {
        match &self.shape {
            Shape::Interval { half_width } => *half_width,
            Shape::StarShaped(p) => p.max_rho(),
        }
    }

    pub fn with_resolution(&self, n_r: usize, n_phi: usize) -> Result<Self, GeometryError> {
        Self::new(self.shape.clone(), n_r, n_phi)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.n_r < 8 {
            return Err(GeometryError::InvalidGrid(format!("n_r = {} < 8", self.n_r)));
        }
        match &self.shape {
            Shape::Interval { half_width } => {
                if !(*half_width > 0.0) {
                    return Err(GeometryError::NotStarShaped {
                        angle: 0.0,
                        value: *half_width,
                    });
                }
            }
            Shape::StarShaped(p) => {
                if self.n_phi < 16 || self.n_phi % 2 != 0 {
                    return Err(GeometryError::InvalidGrid(format!(
                        "n_phi = {} must be even and >= 16",
                        self.n_phi
                    )));
                }
                let samples = self.n_phi.max(1024);
                for m in 0..samples {
                    let angle = 2.0 * PI * m as f64 / samples as f64;
                    let value = p.rho(angle);
                    if !(value > 0.0) {
                        return Err(GeometryError::NotStarShaped { angle, value });
                    }
                }
            }
        }
        Ok(())
    }
}
