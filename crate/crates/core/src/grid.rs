//! Grids over star-shaped domains and the differentiation operators on them.
//!
//! Planar domains use mapped polar coordinates `x = R(r, φ) e_φ` with
//! `R = r (ρ₀ + χ(r)(ρ(φ) - ρ₀))`, `ρ₀ = min ρ` over the collocation angles and
//! `χ` a smooth ramp that vanishes near the pole. On the boundary row `R = ρ`,
//! and near the pole the map is plain polar coordinates, so the parity
//! identification `U(-r, φ) = U(r, φ + π)` holds exactly. Radial nodes sit at
//! half-integer offsets `r_j = (j + 1/2) h` with `h = 1/(n_r - 1/2)`; there is no
//! node at the pole. Angular derivatives are Fourier collocation, radial ones
//! fourth-order finite differences: five-point centered stencils in the bulk,
//! an off-centred stencil next to the boundary and one-sided differences on
//! the boundary row itself, which only post-processing reads.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::domain::{Domain, RadialProfile, Shape};
use crate::error::GeometryError;
use crate::linalg::BlockBanded;

const RAMP_START: f64 = 0.3;
const RAMP_END: f64 = 0.9;

/// Cartesian first and second derivatives at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDerivatives {
    pub du: DVector<f64>,
    pub d2u: DMatrix<f64>,
}

/// Linearization weights at one node: `δG = Σ grad_s δu_s + Σ hess_st δu_st +
/// value δu` (the Hessian weights are applied to the full symmetric matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeWeights {
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub value: f64,
}

/// Degree-9 smoothstep on `[RAMP_START, RAMP_END]` and its first two
/// derivatives in `r`.
fn ramp(r: f64) -> (f64, f64, f64) {
    let width = RAMP_END - RAMP_START;
    let s = (r - RAMP_START) / width;
    if s <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let s2 = s * s;
    let s4 = s2 * s2;
    let v = s4 * s * (126.0 + s * (-420.0 + s * (540.0 + s * (-315.0 + 70.0 * s))));
    let t = 1.0 - s;
    let d1 = 630.0 * s4 * t * t * t * t / width;
    let d2 = 2520.0 * s2 * s * t * t * t * (1.0 - 2.0 * s) / (width * width);
    (v, d1, d2)
}

/// Radial stencil `(offset, d1, d2)` for a node `d` steps inside the outer
/// end, offsets counted outward. Weights are scaled by `1/12h` and `1/12h²`.
/// The end node gets fourth-order one-sided differences, its neighbour an
/// off-centred stencil, and all others the five-point centered one.
fn radial_stencil(d: usize) -> &'static [(isize, f64, f64)] {
    const END: [(isize, f64, f64); 6] = [
        (0, 25.0, 45.0),
        (-1, -48.0, -154.0),
        (-2, 36.0, 214.0),
        (-3, -16.0, -156.0),
        (-4, 3.0, 61.0),
        (-5, 0.0, -10.0),
    ];
    const NEAR: [(isize, f64, f64); 5] = [
        (1, 3.0, 11.0),
        (0, 10.0, -20.0),
        (-1, -18.0, 6.0),
        (-2, 6.0, 4.0),
        (-3, -1.0, -1.0),
    ];
    const CENTER: [(isize, f64, f64); 5] = [
        (-2, 1.0, -1.0),
        (-1, -8.0, 16.0),
        (0, 0.0, -30.0),
        (1, 8.0, 16.0),
        (2, -1.0, -1.0),
    ];
    match d {
        0 => &END,
        1 => &NEAR,
        _ => &CENTER,
    }
}

/// Periodic Fourier collocation differentiation matrices on `n` (even)
/// equispaced points of `[0, 2π)`.
pub fn fourier_matrices(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let h = 2.0 * PI / n as f64;
    let mut d1 = DMatrix::zeros(n, n);
    let mut d2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                d2[(i, j)] = -PI * PI / (3.0 * h * h) - 1.0 / 6.0;
                continue;
            }
            let k = i as i64 - j as i64;
            let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let half = 0.5 * k as f64 * h;
            d1[(i, j)] = 0.5 * sign / half.tan();
            d2[(i, j)] = -0.5 * sign / (half.sin() * half.sin());
        }
    }
    (d1, d2)
}

/// Per-node data of the coordinate map.
#[derive(Debug, Clone)]
struct MapData {
    x: Vector2<f64>,
    jac: Matrix2<f64>,
    /// second derivatives `X_rr`, `X_rφ`, `X_φφ`
    second: [Vector2<f64>; 3],
}

#[derive(Debug, Clone)]
pub struct PolarGrid {
    pub n_r: usize,
    pub n_phi: usize,
    pub h: f64,
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    pub rho_min: f64,
    pub profile: RadialProfile,
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
    map: Vec<MapData>,
}

#[derive(Debug, Clone)]
pub struct IntervalGrid {
    pub cells: usize,
    pub half_width: f64,
    pub h: f64,
}

#[derive(Debug, Clone)]
pub enum GridTopology {
    Polar(PolarGrid),
    Interval(IntervalGrid),
}

/// Builds the grid for a domain.
pub fn build_grid(domain: &Domain) -> Result<GridTopology, GeometryError> {
    domain.validate()?;
    match &domain.shape {
        Shape::Interval { half_width } => Ok(GridTopology::Interval(IntervalGrid {
            cells: domain.n_r,
            half_width: *half_width,
            h: 2.0 * half_width / domain.n_r as f64,
        })),
        Shape::StarShaped(profile) => PolarGrid::new(profile, domain.n_r, domain.n_phi).map(GridTopology::Polar),
    }
}

impl PolarGrid {
    fn new(profile: &RadialProfile, n_r: usize, n_phi: usize) -> Result<Self, GeometryError> {
        let h = 1.0 / (n_r as f64 - 0.5);
        let r: Vec<f64> = (0..n_r).map(|j| (j as f64 + 0.5) * h).collect();
        let phi: Vec<f64> = (0..n_phi).map(|m| 2.0 * PI * m as f64 / n_phi as f64).collect();
        let rho_min = phi.iter().map(|&p| profile.rho(p)).fold(f64::INFINITY, f64::min);
        let (d1, d2) = fourier_matrices(n_phi);
        let mut map = Vec::with_capacity(n_r * n_phi);
        for (j, &rj) in r.iter().enumerate() {
            for (m, &pm) in phi.iter().enumerate() {
                let (rho, drho, ddrho) = profile.eval(pm);
                let delta = rho - rho_min;
                let (chi, dchi, ddchi) = if j + 1 == n_r { (1.0, 0.0, 0.0) } else { ramp(rj) };
                let big_r = rj * (rho_min + chi * delta);
                let r_r = rho_min + (chi + rj * dchi) * delta;
                let r_rr = (2.0 * dchi + rj * ddchi) * delta;
                let r_p = rj * chi * drho;
                let r_pp = rj * chi * ddrho;
                let r_rp = (chi + rj * dchi) * drho;
                let (s, c) = pm.sin_cos();
                let e = Vector2::new(c, s);
                let perp = Vector2::new(-s, c);
                let x_r = e * r_r;
                let x_p = e * r_p + perp * big_r;
                let jac = Matrix2::from_columns(&[x_r, x_p]);
                if jac.determinant().abs() < 1e-300 {
                    return Err(GeometryError::SingularJacobian(j * n_phi + m));
                }
                map.push(MapData {
                    x: e * big_r,
                    jac,
                    second: [e * r_rr, e * r_rp + perp * r_r, e * r_pp + perp * (2.0 * r_p) - e * big_r],
                });
            }
        }
        Ok(Self {
            n_r,
            n_phi,
            h,
            r,
            phi,
            rho_min,
            profile: profile.clone(),
            d1,
            d2,
            map,
        })
    }

    fn idx(&self, j: usize, m: usize) -> usize {
        j * self.n_phi + m
    }

    /// Node `off` rows above `(j, m)`; rows below the pole continue through
    /// it as `U(-r, φ) = U(r, φ + π)`.
    fn radial_neighbour(&self, j: usize, m: usize, off: isize) -> usize {
        let jj = j as isize + off;
        if jj < 0 {
            self.idx((-jj - 1) as usize, (m + self.n_phi / 2) % self.n_phi)
        } else {
            self.idx(jj as usize, m)
        }
    }

    /// Maps polar derivatives `(U_r, U_φ, U_rr, U_rφ, U_φφ)` at node `p` to
    /// Cartesian `(Du, D²u)`.
    fn to_cartesian(&self, p: usize, raw: [f64; 5]) -> (Vector2<f64>, Matrix2<f64>) {
        let md = &self.map[p];
        let jt = md.jac.transpose();
        let lu = jt.lu();
        let du = lu.solve(&Vector2::new(raw[0], raw[1])).expect("nonsingular map");
        let s = Matrix2::new(
            raw[2] - du.dot(&md.second[0]),
            raw[3] - du.dot(&md.second[1]),
            raw[3] - du.dot(&md.second[1]),
            raw[4] - du.dot(&md.second[2]),
        );
        // Jᵀ H J = S
        let y = lu.solve(&s).expect("nonsingular map");
        let hess = lu.solve(&y.transpose()).expect("nonsingular map");
        (du, 0.5 * (hess + hess.transpose()))
    }

    fn raw_derivatives(&self, u: &[f64]) -> Vec<[f64; 5]> {
        let (nr, np, h) = (self.n_r, self.n_phi, self.h);
        let mut up = vec![0.0; nr * np];
        let mut upp = vec![0.0; nr * np];
        for j in 0..nr {
            // the ring mean is annihilated exactly; removing it first keeps
            // rounding small on the innermost rings, where 1/r² is large
            let ring = &u[j * np..(j + 1) * np];
            let mean = ring.iter().sum::<f64>() / np as f64;
            let row = DVector::from_iterator(np, ring.iter().map(|v| v - mean));
            let a = &self.d1 * &row;
            let b = &self.d2 * &row;
            up[j * np..(j + 1) * np].copy_from_slice(a.as_slice());
            upp[j * np..(j + 1) * np].copy_from_slice(b.as_slice());
        }
        let (s1, s2) = (12.0 * h, 12.0 * h * h);
        let mut out = Vec::with_capacity(nr * np);
        for j in 0..nr {
            for m in 0..np {
                let (mut ur, mut urr, mut urp) = (0.0, 0.0, 0.0);
                for &(off, a, b) in radial_stencil(nr - 1 - j) {
                    let q = self.radial_neighbour(j, m, off);
                    ur += a * u[q];
                    urr += b * u[q];
                    urp += a * up[q];
                }
                let p = self.idx(j, m);
                out.push([ur / s1, up[p], urr / s2, urp / s1, upp[p]]);
            }
        }
        out
    }

    fn differentiate(&self, u: &[f64]) -> Vec<NodeDerivatives> {
        self.raw_derivatives(u)
            .into_iter()
            .enumerate()
            .map(|(p, raw)| {
                let (du, hess) = self.to_cartesian(p, raw);
                NodeDerivatives {
                    du: DVector::from_column_slice(du.as_slice()),
                    d2u: DMatrix::from_column_slice(2, 2, hess.as_slice()),
                }
            })
            .collect()
    }

    fn assemble(&self, weights: &[NodeWeights]) -> BlockBanded {
        let (nr, np, h) = (self.n_r, self.n_phi, self.h);
        let mut mat = BlockBanded::zeros(nr - 1, np, 3, 2);
        let boundary = (nr - 1) * np;
        for j in 0..nr - 1 {
            for m in 0..np {
                let p = self.idx(j, m);
                let w = &weights[p];
                // pull Cartesian weights back to the polar derivatives
                let mut raw = [0.0; 5];
                for (k, slot) in raw.iter_mut().enumerate() {
                    let mut e = [0.0; 5];
                    e[k] = 1.0;
                    let (du, hess) = self.to_cartesian(p, e);
                    *slot = w.grad[0] * du[0]
                        + w.grad[1] * du[1]
                        + w.hess[(0, 0)] * hess[(0, 0)]
                        + (w.hess[(0, 1)] + w.hess[(1, 0)]) * hess[(0, 1)]
                        + w.hess[(1, 1)] * hess[(1, 1)];
                }
                let [wr, wp, wrr, wrp, wpp] = raw;
                let (s1, s2) = (12.0 * h, 12.0 * h * h);
                mat.add(p, p, w.value);
                for &(off, a, b) in radial_stencil(nr - 1 - j) {
                    let q = self.radial_neighbour(j, m, off);
                    if q >= boundary {
                        continue;
                    }
                    let (row, col) = (q - q % np, q % np);
                    mat.add(p, q, a * wr / s1 + b * wrr / s2);
                    if wrp != 0.0 {
                        for mm in 0..np {
                            mat.add(p, row + mm, a * wrp / s1 * self.d1[(col, mm)]);
                        }
                    }
                }
                let base = p - m;
                for mm in 0..np {
                    mat.add(p, base + mm, wp * self.d1[(m, mm)] + wpp * self.d2[(m, mm)]);
                }
            }
        }
        mat
    }
}

impl IntervalGrid {
    fn x(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.h
    }

    /// Stencil at node `i` as `(node, d1, d2)` with unscaled weights.
    fn stencil(&self, i: usize) -> impl Iterator<Item = (usize, f64, f64)> {
        let n = self.cells;
        let left = i < n - i;
        let d = if left { i } else { n - i };
        radial_stencil(d).iter().map(move |&(off, a, b)| {
            if left {
                ((i as isize - off) as usize, -a, b)
            } else {
                ((i as isize + off) as usize, a, b)
            }
        })
    }

    fn differentiate(&self, u: &[f64]) -> Vec<NodeDerivatives> {
        let (s1, s2) = (12.0 * self.h, 12.0 * self.h * self.h);
        (0..=self.cells)
            .map(|i| {
                let (d, dd) = self.stencil(i).fold((0.0, 0.0), |(d, dd), (k, a, b)| (d + a * u[k], dd + b * u[k]));
                NodeDerivatives {
                    du: DVector::from_element(1, d / s1),
                    d2u: DMatrix::from_element(1, 1, dd / s2),
                }
            })
            .collect()
    }

    fn assemble(&self, weights: &[NodeWeights]) -> BlockBanded {
        let n = self.cells;
        let (s1, s2) = (12.0 * self.h, 12.0 * self.h * self.h);
        let mut mat = BlockBanded::zeros(n - 1, 1, 3, 3);
        for i in 1..n {
            let w = &weights[i];
            let (g, s) = (w.grad[0], w.hess[(0, 0)]);
            mat.add(i - 1, i - 1, w.value);
            for (k, a, b) in self.stencil(i) {
                if k > 0 && k < n {
                    mat.add(i - 1, k - 1, g * a / s1 + s * b / s2);
                }
            }
        }
        mat
    }
}

impl GridTopology {
    pub fn dim(&self) -> usize {
        match self {
            GridTopology::Polar(_) => 2,
            GridTopology::Interval(_) => 1,
        }
    }

    /// Total node count, boundary included.
    pub fn len(&self) -> usize {
        match self {
            GridTopology::Polar(g) => g.n_r * g.n_phi,
            GridTopology::Interval(g) => g.cells + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid spacing used in discretization-error tolerances.
    pub fn spacing(&self) -> f64 {
        match self {
            GridTopology::Polar(g) => g.h,
            GridTopology::Interval(g) => g.h / g.half_width,
        }
    }

    pub fn position(&self, p: usize) -> DVector<f64> {
        match self {
            GridTopology::Polar(g) => DVector::from_column_slice(g.map[p].x.as_slice()),
            GridTopology::Interval(g) => DVector::from_element(1, g.x(p)),
        }
    }

    pub fn positions(&self) -> Vec<DVector<f64>> {
        (0..self.len()).map(|p| self.position(p)).collect()
    }

    pub fn is_boundary(&self, p: usize) -> bool {
        match self {
            GridTopology::Polar(g) => p >= (g.n_r - 1) * g.n_phi,
            GridTopology::Interval(g) => p == 0 || p == g.cells,
        }
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| self.is_boundary(p)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| !self.is_boundary(p)).collect()
    }

    /// Position of node `p` in the unknown vector, `None` on the boundary.
    pub fn unknown_index(&self, p: usize) -> Option<usize> {
        if self.is_boundary(p) {
            return None;
        }
        match self {
            GridTopology::Polar(_) => Some(p),
            GridTopology::Interval(_) => Some(p - 1),
        }
    }

    pub fn unknown_count(&self) -> usize {
        self.len() - self.boundary_nodes().len()
    }

    /// Outward boundary normal at a boundary node.
    pub fn boundary_normal(&self, p: usize) -> Option<DVector<f64>> {
        match self {
            GridTopology::Polar(g) if self.is_boundary(p) => {
                let n = g.profile.normal(g.phi[p % g.n_phi]);
                Some(DVector::from_column_slice(&n))
            }
            GridTopology::Interval(g) if p == 0 => Some(DVector::from_element(1, -1.0)),
            GridTopology::Interval(g) if p == g.cells => Some(DVector::from_element(1, 1.0)),
            _ => None,
        }
    }

    /// Mapped polar coordinates `(r, φ)` of a node (`(x, 0)` on intervals).
    pub fn coordinates(&self, p: usize) -> (f64, f64) {
        match self {
            GridTopology::Polar(g) => (g.r[p / g.n_phi], g.phi[p % g.n_phi]),
            GridTopology::Interval(g) => (g.x(p), 0.0),
        }
    }

    /// Cartesian `Du`, `D²u` at every node.
    pub fn differentiate(&self, u: &[f64]) -> Vec<NodeDerivatives> {
        assert_eq!(u.len(), self.len());
        match self {
            GridTopology::Polar(g) => g.differentiate(u),
            GridTopology::Interval(g) => g.differentiate(u),
        }
    }

    /// Assembles the discrete operator `φ ↦ Σ weights · (Dφ, D²φ, φ)` on the
    /// interior unknowns, with `φ = 0` on the boundary. `weights` is indexed
    /// by node; boundary entries are ignored.
    pub fn assemble(&self, weights: &[NodeWeights]) -> BlockBanded {
        assert_eq!(weights.len(), self.len());
        match self {
            GridTopology::Polar(g) => g.assemble(weights),
            GridTopology::Interval(g) => g.assemble(weights),
        }
    }

    /// Scatters an unknown vector into a full node field with boundary value `boundary`.
    pub fn scatter(&self, x: &DVector<f64>, boundary: f64) -> Vec<f64> {
        (0..self.len())
            .map(|p| self.unknown_index(p).map_or(boundary, |k| x[k]))
            .collect()
    }

    pub fn gather(&self, field: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.unknown_count());
        for (p, v) in field.iter().enumerate() {
            if let Some(k) = self.unknown_index(p) {
                out[k] = *v;
            }
        }
        out
    }
}
