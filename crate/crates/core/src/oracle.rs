//! Equidistant sphere caps: the exact umbilic solutions with `κ ≡ σ`.
//!
//! The cap `u = √(R² - |x|²) - σR` meets the ideal boundary at the angle
//! prescribed by `σ`. Cutting it at height `ε` gives the exact solution of the
//! Dirichlet problem `u = ε` on the disk of radius `ρ` once `R` is matched to
//! `(σ, ρ, ε)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cap {
    pub sigma: f64,
    /// Euclidean sphere radius.
    pub radius: f64,
}

impl Cap {
    pub fn new(sigma: f64, radius: f64) -> Self {
        Self { sigma, radius }
    }

    /// Cap with `u = ε` on `|x| = rho`.
    pub fn matched(sigma: f64, rho: f64, eps: f64) -> Self {
        let s2 = 1.0 - sigma * sigma;
        let radius = (eps * sigma + (eps * eps * sigma * sigma + s2 * (eps * eps + rho * rho)).sqrt()) / s2;
        Self { sigma, radius }
    }

    /// Radius of the disk where the cap meets `u = 0`.
    pub fn domain_radius(&self) -> f64 {
        self.radius * (1.0 - self.sigma * self.sigma).sqrt()
    }

    fn s(&self, x: &DVector<f64>) -> f64 {
        (self.radius * self.radius - x.norm_squared()).sqrt()
    }

    pub fn u(&self, x: &DVector<f64>) -> f64 {
        self.s(x) - self.sigma * self.radius
    }

    pub fn du(&self, x: &DVector<f64>) -> DVector<f64> {
        -x / self.s(x)
    }

    pub fn d2u(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let s = self.s(x);
        let n = x.len();
        -(DMatrix::identity(n, n) / s + x * x.transpose() / (s * s * s))
    }

    /// `ν^{n+1} = s/R`.
    pub fn nu(&self, x: &DVector<f64>) -> f64 {
        self.s(x) / self.radius
    }

    /// `η = (σ - ν^{n+1})/u`, constant on the cap.
    pub fn eta(&self) -> f64 {
        -1.0 / self.radius
    }
}
