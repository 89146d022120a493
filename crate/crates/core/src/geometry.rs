//! Pointwise Euclidean and hyperbolic geometry of the graph of `u` in the
//! upper half-space model.

use nalgebra::{DMatrix, DVector};

use crate::error::GeometryError;
use crate::grid::GridTopology;
use crate::linalg::{generalized_eigenvalues, sym_eigenvalues};

/// `γ^{ij}`, `A^e` and `A[u]` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeMatrices {
    pub w: f64,
    pub gamma: DMatrix<f64>,
    pub a_e: DMatrix<f64>,
    pub a: DMatrix<f64>,
}

/// `γ = I - Du⊗Du/(w(1+w))`, `A^e = γ D²u γ / w`, `A = u A^e + I/w`.
pub fn shape_matrices(u: f64, du: &DVector<f64>, d2u: &DMatrix<f64>) -> ShapeMatrices {
    let n = du.len();
    let w = (1.0 + du.norm_squared()).sqrt();
    let gamma = DMatrix::identity(n, n) - du * du.transpose() / (w * (1.0 + w));
    let a_e = &gamma * d2u * &gamma / w;
    let a = &a_e * u + DMatrix::identity(n, n) / w;
    ShapeMatrices { w, gamma, a_e, a }
}

/// Ascending eigenvalues of a symmetric matrix (`A` or `A^e`).
pub fn principal_curvatures(a: &DMatrix<f64>) -> Result<Vec<f64>, GeometryError> {
    sym_eigenvalues(a)
}

/// Ascending eigenvalues of the second fundamental form `h` relative to `g`.
pub fn principal_curvatures_pencil(h: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<Vec<f64>, GeometryError> {
    generalized_eigenvalues(h, g)
}

/// Everything the solver and verifier read off a single node.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGeometry {
    pub x: DVector<f64>,
    pub u: f64,
    pub du: DVector<f64>,
    pub d2u: DMatrix<f64>,
    pub w: f64,
    /// vertical component `ν^{n+1} = 1/w` of the upward Euclidean normal
    pub nu: f64,
    pub gamma: DMatrix<f64>,
    pub a_e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub kappa_e: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl PointGeometry {
    pub fn new(x: DVector<f64>, u: f64, du: DVector<f64>, d2u: DMatrix<f64>) -> Result<Self, GeometryError> {
        let s = shape_matrices(u, &du, &d2u);
        let kappa_e = principal_curvatures(&s.a_e)?;
        let kappa = principal_curvatures(&s.a)?;
        Ok(Self {
            x,
            u,
            du,
            d2u,
            w: s.w,
            nu: 1.0 / s.w,
            gamma: s.gamma,
            a_e: s.a_e,
            a: s.a,
            kappa_e,
            kappa,
        })
    }

    pub fn kappa_max(&self) -> f64 {
        *self.kappa.last().expect("n >= 1")
    }

    pub fn kappa_min(&self) -> f64 {
        self.kappa[0]
    }

    /// `η = (σ - ν^{n+1})/u`.
    pub fn eta(&self, sigma: f64) -> f64 {
        (sigma - self.nu) / self.u
    }

    /// `u - x·Du`, which equals `w (X·ν)` for the position vector `X = (x, u)`.
    pub fn starshape(&self) -> f64 {
        self.u - self.x.dot(&self.du)
    }

    pub fn tensors(&self) -> SurfaceTensors {
        SurfaceTensors::new(self.u, &self.du, &self.d2u)
    }
}

/// Geometry at every node of a grid function.
pub fn grid_geometry(grid: &GridTopology, u: &[f64]) -> Result<Vec<PointGeometry>, GeometryError> {
    grid.differentiate(u)
        .into_iter()
        .enumerate()
        .map(|(p, d)| PointGeometry::new(grid.position(p), u[p], d.du, d.d2u))
        .collect()
}

/// Induced hyperbolic metric, second fundamental form and Christoffel
/// symbols of the graph in graph coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceTensors {
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// `christoffel[k][(i, j)] = Γ^k_ij`
    pub christoffel: Vec<DMatrix<f64>>,
}

impl SurfaceTensors {
    /// `g_ij = (δ_ij + u_i u_j)/u²`, `h_ij = (δ_ij + u_i u_j + u u_ij)/(u² w)`;
    /// `Γ` from the analytic derivatives of `g`, which involve only `u`, `Du`
    /// and `D²u`.
    pub fn new(u: f64, du: &DVector<f64>, d2u: &DMatrix<f64>) -> Self {
        let n = du.len();
        let w = (1.0 + du.norm_squared()).sqrt();
        let ge = DMatrix::identity(n, n) + du * du.transpose();
        let g = &ge / (u * u);
        let h = (&ge + d2u * u) / (u * u * w);
        // dg[k][(i, j)] = ∂_k g_ij
        let dg: Vec<DMatrix<f64>> = (0..n)
            .map(|k| {
                DMatrix::from_fn(n, n, |i, j| {
                    (d2u[(i, k)] * du[j] + du[i] * d2u[(j, k)]) / (u * u) - 2.0 * du[k] * ge[(i, j)] / (u * u * u)
                })
            })
            .collect();
        let ginv = g.clone().try_inverse().unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
        let christoffel = (0..n)
            .map(|k| {
                DMatrix::from_fn(n, n, |i, j| {
                    0.5 * (0..n)
                        .map(|l| ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]))
                        .sum::<f64>()
                })
            })
            .collect();
        Self { g, h, christoffel }
    }

    pub fn principal_curvatures(&self) -> Result<Vec<f64>, GeometryError> {
        principal_curvatures_pencil(&self.h, &self.g)
    }

    /// `∇_ij φ = ∂_ij φ - Γ^k_ij ∂_k φ`.
    pub fn hessian(&self, dphi: &DVector<f64>, d2phi: &DMatrix<f64>) -> Result<DMatrix<f64>, GeometryError> {
        if self.g.clone().cholesky().is_none() {
            return Err(GeometryError::NotPositiveDefinite);
        }
        let mut out = d2phi.clone();
        for (k, gamma) in self.christoffel.iter().enumerate() {
            out -= gamma * dphi[k];
        }
        Ok(out)
    }
}

/// Intrinsic Hessian of the scalar field `phi` on the graph of `u`, at every
/// interior node.
pub fn intrinsic_hessian(
    grid: &GridTopology,
    u: &[f64],
    phi: &[f64],
) -> Result<Vec<(usize, DMatrix<f64>)>, GeometryError> {
    let du = grid.differentiate(u);
    let dphi = grid.differentiate(phi);
    grid.interior_nodes()
        .into_iter()
        .map(|p| {
            let t = SurfaceTensors::new(u[p], &du[p].du, &du[p].d2u);
            Ok((p, t.hessian(&dphi[p].du, &dphi[p].d2u)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::grid::build_grid;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn m(x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, x)
    }

    #[test]
    fn horosphere_shape() {
        let s = shape_matrices(0.05, &v(&[0.0, 0.0]), &DMatrix::zeros(2, 2));
        assert_eq!(s.gamma, DMatrix::identity(2, 2));
        assert_eq!(s.a_e, DMatrix::zeros(2, 2));
        assert_eq!(s.a, DMatrix::identity(2, 2));
    }

    #[test]
    fn cap_point_shape() {
        let s = shape_matrices(0.3, &v(&[-0.75, 0.0]), &m(&[-1.953125, 0.0, 0.0, -1.25]));
        assert!((s.gamma.clone() - m(&[0.8, 0.0, 0.0, 1.0])).abs().max() < 1e-15);
        assert!((s.a_e.clone() - m(&[-1.0, 0.0, 0.0, -1.0])).abs().max() < 1e-14);
        assert!((s.a.clone() - m(&[0.5, 0.0, 0.0, 0.5])).abs().max() < 1e-14);
        let doubled = shape_matrices(0.3, &v(&[-0.75, 0.0]), &(m(&[-1.953125, 0.0, 0.0, -1.25]) * 2.0));
        assert_eq!(doubled.a_e, s.a_e.clone() * 2.0);
    }

    #[test]
    fn principal_curvature_examples() {
        assert_eq!(principal_curvatures(&DMatrix::identity(2, 2)).unwrap(), vec![1.0, 1.0]);
        assert_eq!(principal_curvatures(&m(&[0.5, 0.0, 0.0, 0.5])).unwrap(), vec![0.5, 0.5]);
        let t = SurfaceTensors::new(0.5, &v(&[0.0, 0.0]), &m(&[-1.0, 0.0, 0.0, -1.0]));
        assert!((t.h.clone() - DMatrix::identity(2, 2) * 2.0).abs().max() < 1e-15);
        assert!((t.g.clone() - DMatrix::identity(2, 2) * 4.0).abs().max() < 1e-15);
        let k = t.principal_curvatures().unwrap();
        assert!((k[0] - 0.5).abs() < 1e-15 && (k[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn intrinsic_hessian_of_constant_vanishes() {
        let t = SurfaceTensors::new(0.4, &v(&[0.3, -0.2]), &m(&[-1.0, 0.2, 0.2, -0.8]));
        let hess = t.hessian(&v(&[0.0, 0.0]), &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(hess, DMatrix::zeros(2, 2));
    }

    #[test]
    fn cap_center_identity() {
        // 1/u at the cap center: ∂(1/u) = 0, ∂²(1/u) = -D²u/u² = 4I
        let t = SurfaceTensors::new(0.5, &v(&[0.0, 0.0]), &m(&[-1.0, 0.0, 0.0, -1.0]));
        let lhs = t.hessian(&v(&[0.0, 0.0]), &(DMatrix::identity(2, 2) * 4.0)).unwrap();
        let rhs = (&t.g - &t.h * 1.0) * 2.0;
        assert!((lhs - rhs).abs().max() < 1e-14);
    }

    #[test]
    fn pairing_and_two_routes_at_random_points() {
        let mut s = 3u64;
        let mut rnd = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for _ in 0..200 {
            let u = 0.1 + rnd().abs();
            let du = v(&[rnd() * 3.0, rnd() * 3.0]);
            let c = rnd();
            let d2u = m(&[rnd() * 4.0, c, c, rnd() * 4.0]);
            let pg = PointGeometry::new(v(&[0.0, 0.0]), u, du.clone(), d2u.clone()).unwrap();
            for (k, ke) in pg.kappa.iter().zip(&pg.kappa_e) {
                assert!((k - (u * ke + pg.nu)).abs() < 1e-10);
            }
            let gg = &pg.gamma * &pg.gamma * (DMatrix::identity(2, 2) + &du * du.transpose());
            assert!((gg - DMatrix::identity(2, 2)).abs().max() < 1e-10);
            let pencil = pg.tensors().principal_curvatures().unwrap();
            for (a, b) in pencil.iter().zip(&pg.kappa) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    fn cap_identity_residual(n_r: usize) -> f64 {
        let sigma: f64 = 0.8;
        let grid = build_grid(&Domain::disk((1.0 - sigma * sigma).sqrt(), n_r, 32).unwrap()).unwrap();
        let u: Vec<f64> = grid
            .positions()
            .iter()
            .map(|x| (1.0 - x.norm_squared()).sqrt() - sigma + 0.2)
            .collect();
        let inv: Vec<f64> = u.iter().map(|x| 1.0 / x).collect();
        let geo = grid_geometry(&grid, &u).unwrap();
        let hess = intrinsic_hessian(&grid, &u, &inv).unwrap();
        hess.iter()
            .map(|(p, lhs)| {
                let t = geo[*p].tensors();
                let rhs = (&t.g - &t.h * geo[*p].nu) / u[*p];
                (lhs - &rhs).abs().max() / rhs.abs().max()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn hessian_identity_converges_on_cap() {
        let (a, b) = (cap_identity_residual(16), cap_identity_residual(32));
        let order = (a / b).log2();
        assert!(order >= 1.8, "order {order} ({a} -> {b})");
    }

    #[test]
    fn horosphere_identity_vanishes() {
        let grid = build_grid(&Domain::disk(1.0, 8, 16).unwrap()).unwrap();
        let u = vec![0.2; grid.len()];
        let inv: Vec<f64> = u.iter().map(|x| 1.0 / x).collect();
        for (_, hess) in intrinsic_hessian(&grid, &u, &inv).unwrap() {
            assert!(hess.abs().max() < 1e-9);
        }
        let t = SurfaceTensors::new(0.2, &v(&[0.0, 0.0]), &DMatrix::zeros(2, 2));
        assert!((t.g.clone() - t.h.clone()).abs().max() < 1e-12);
    }
}
