//! Hodograph transport of a hyperbolic graph to its dual spacelike graph in
//! the steady-state region of de Sitter space.
//!
//! With `q = (|x|² + u²)/2` the map `y = Dq(x) = x + u Du` has Jacobian
//! `D²q = I + Du⊗Du + u D²u`, and the dual height is `v = u w`. The Legendre
//! transform `p(y) = (|y|² - v²)/2` satisfies `Dp = x`, `D²p = (D²q)⁻¹`, which
//! gives `∇v = Du/w` and `∇²v = (I - ∇v⊗∇v - (D²q)⁻¹)/v` without regridding.

use nalgebra::{DMatrix, DVector};

use crate::curvature::CurvatureSpec;
use crate::domain::Domain;
use crate::error::VerifyError;
use crate::grid::{build_grid, GridTopology};
use crate::linalg::{generalized_eigenvalues, min_eigenvalue};
use crate::solver::{GridFunction, LevelSolution};
use crate::verifier::{richardson, ScoreEntry, SolutionAnalysis};

#[derive(Debug, Clone, PartialEq)]
pub struct DeSitterPoint {
    /// source node
    pub x: DVector<f64>,
    pub u: f64,
    pub y: DVector<f64>,
    pub v: f64,
    pub grad_v: DVector<f64>,
    pub hess_v: DMatrix<f64>,
    /// `√(1 - |∇v|²)`
    pub w_s: f64,
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// Legendre pair `p(y)`, `q(x)`.
    pub p: f64,
    pub q: f64,
}

impl DeSitterPoint {
    /// Transports one node `(x, u, Du, D²u)`.
    pub fn new(x: &DVector<f64>, u: f64, du: &DVector<f64>, d2u: &DMatrix<f64>) -> Option<Self> {
        let n = x.len();
        let id = DMatrix::identity(n, n);
        let w = (1.0 + du.norm_squared()).sqrt();
        let d2q = &id + du * du.transpose() + d2u * u;
        if !(min_eigenvalue(&d2q).ok()? > 0.0) {
            return None;
        }
        let d2p = d2q.try_inverse()?;
        let y = x + du * u;
        let v = u * w;
        let grad_v = du / w;
        let metric = &id - &grad_v * grad_v.transpose();
        let hess_v = (&metric - &d2p) / v;
        let w_s = (1.0 - grad_v.norm_squared()).sqrt();
        let g = &metric / (v * v);
        // (I - ∇v⊗∇v - v∇²v) = D²p
        let h = &d2p / (v * v * w_s);
        let p = 0.5 * (y.norm_squared() - v * v);
        let q = 0.5 * (x.norm_squared() + u * u);
        Some(Self {
            x: x.clone(),
            u,
            y,
            v,
            grad_v,
            hess_v,
            w_s,
            g,
            h,
            p,
            q,
        })
    }

    /// Dual principal curvatures, ascending.
    pub fn curvatures(&self) -> Result<Vec<f64>, VerifyError> {
        Ok(generalized_eigenvalues(&self.h, &self.g)?)
    }

    /// `p(y) + q(x) - x·y`, zero for a Legendre pair.
    pub fn legendre_defect(&self) -> f64 {
        self.p + self.q - self.x.dot(&self.y)
    }
}

/// Transports every node of `u`.
pub fn forward_map(grid: &GridTopology, u: &GridFunction) -> Result<Vec<DeSitterPoint>, VerifyError> {
    grid.differentiate(&u.values)
        .iter()
        .enumerate()
        .map(|(p, d)| {
            DeSitterPoint::new(&grid.position(p), u.values[p], &d.du, &d.d2u).ok_or(VerifyError::HodographDegenerate(p))
        })
        .collect()
}

/// `κ*` at every node.
pub fn dual_curvatures(cloud: &[DeSitterPoint]) -> Result<Vec<Vec<f64>>, VerifyError> {
    cloud.iter().map(|c| c.curvatures()).collect()
}

/// Reciprocity `κ*_i κ_i = 1` (ascending against descending), the dual
/// equation `f*(κ*) = 1/σ` at interior nodes, the spacelike bound and the
/// Legendre identity.
pub fn duality_checks(a: &SolutionAnalysis) -> Result<Vec<ScoreEntry>, VerifyError> {
    let cloud = forward_map(&a.grid, &a.solution)?;
    let dual = a.spec.clone().dual();
    let (mut recip, mut level, mut legendre, mut spacelike) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut round_trip = 0.0f64;
    for (p, c) in cloud.iter().enumerate() {
        legendre = legendre.max(c.legendre_defect().abs());
        spacelike = spacelike.max(c.grad_v.norm());
        round_trip = round_trip
            .max((c.v * c.w_s - c.u).abs())
            .max((&c.y - &c.grad_v * c.v - &c.x).abs().max());
        if a.grid.is_boundary(p) {
            continue;
        }
        let ks = c.curvatures()?;
        let k = &a.geometry[p].kappa;
        for (s, kk) in ks.iter().zip(k.iter().rev()) {
            recip = recip.max((s * kk - 1.0).abs());
        }
        level = level.max((dual.value(&ks)? - 1.0 / a.sigma).abs());
    }
    Ok(vec![
        ScoreEntry::le("duality.reciprocity", recip, 0.0, 1e-8),
        ScoreEntry::le("duality.dual_equation", level, 0.0, 1e-8),
        ScoreEntry::le("duality.legendre", legendre, 0.0, 1e-10),
        ScoreEntry::lt("duality.spacelike", spacelike, 1.0, 1e-12),
        ScoreEntry::le("duality.round_trip", round_trip, 0.0, 1e-12),
    ])
}

/// The extrapolated boundary value of `w_S` approaches `σ`.
pub fn dual_boundary_check(domain: &Domain, sigma: f64, levels: &[LevelSolution]) -> Result<Vec<ScoreEntry>, VerifyError> {
    let grid = build_grid(domain)?;
    let boundary = grid.boundary_nodes();
    let series = levels
        .iter()
        .map(|l| {
            let cloud = forward_map(&grid, &l.solution)?;
            Ok((l.eps, boundary.iter().map(|&p| cloud[p].w_s).collect()))
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;
    let h = grid.spacing();
    let ws = richardson(&series, 10.0 * h * h)?;
    let dev = ws.iter().fold(0.0f64, |m, w| m.max((w - sigma).abs()));
    Ok(vec![ScoreEntry::le("duality.boundary_w_s", dev, 0.02 * sigma, 0.0)])
}

/// `f*` as evaluated on the dual side: the closed form where one exists.
pub fn dual_spec(spec: &CurvatureSpec) -> CurvatureSpec {
    spec.closed_form_dual().unwrap_or_else(|| spec.clone().dual())
}
