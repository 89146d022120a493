//! Scorecard of estimates and identities checked on converged solutions.
//!
//! Every entry records both sides of the inequality it tests, the tolerance
//! and the margin by which it holds (negative when it fails).

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::curvature::CurvatureSpec;
use crate::desitter;
use crate::domain::{Domain, Shape};
use crate::error::VerifyError;
use crate::geometry::{grid_geometry, PointGeometry};
use crate::grid::{build_grid, GridTopology};
use crate::linalg::min_eigenvalue;
use crate::solver::{linearize, GridFunction, LevelSolution, LinearizedOperator, SolveReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

/// One tested inequality `lhs (relation) rhs` with tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub check_id: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub margin: f64,
    /// Set when the check is informational (e.g. a theorem hypothesis that
    /// does not hold, so its conclusion is not asserted).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ScoreEntry {
    fn make(id: &str, lhs: f64, relation: Relation, rhs: f64, tolerance: f64) -> Self {
        let margin = match relation {
            Relation::Le | Relation::Lt => rhs + tolerance - lhs,
            Relation::Ge | Relation::Gt => lhs - rhs + tolerance,
        };
        let pass = match relation {
            Relation::Le | Relation::Ge => margin >= 0.0,
            Relation::Lt | Relation::Gt => margin > 0.0,
        };
        Self {
            check_id: id.to_string(),
            lhs,
            relation,
            rhs,
            tolerance,
            pass,
            margin,
            note: None,
        }
    }

    pub fn le(id: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::make(id, lhs, Relation::Le, rhs, tolerance)
    }

    pub fn lt(id: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::make(id, lhs, Relation::Lt, rhs, tolerance)
    }

    pub fn ge(id: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::make(id, lhs, Relation::Ge, rhs, tolerance)
    }

    pub fn gt(id: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::make(id, lhs, Relation::Gt, rhs, tolerance)
    }

    /// Marks the entry informational: it is reported but always passes.
    pub fn informational(mut self, note: &str) -> Self {
        self.note = Some(note.to_string());
        self.pass = true;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub entries: Vec<ScoreEntry>,
}

impl Scorecard {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failures(&self) -> Vec<&ScoreEntry> {
        self.entries.iter().filter(|e| !e.pass).collect()
    }

    pub fn get(&self, id: &str) -> Option<&ScoreEntry> {
        self.entries.iter().find(|e| e.check_id == id)
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = ScoreEntry>) {
        self.entries.extend(entries);
    }
}

/// Maximal radii of interior (`r_1`) and exterior (`r_2`) tangent balls;
/// `exterior = None` means every exterior ball fits (convex domains).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallRadii {
    pub interior: f64,
    pub exterior: Option<f64>,
}

impl BallRadii {
    /// `1/r_2`, zero when `r_2 = ∞`.
    pub fn inv_exterior(&self) -> f64 {
        self.exterior.map_or(0.0, |r| 1.0 / r)
    }
}

const BALL_SAMPLES: usize = 1024;

/// Brute-force tangent ball radii: a candidate radius is admissible when the
/// ball tangent at every sampled boundary point stays clear of all other
/// boundary samples and on the correct side of the curve. Radii are bracketed
/// on a logarithmic grid and refined by bisection; the answer is accurate to
/// the sampling density (about 2%).
pub fn ball_radii(domain: &Domain) -> BallRadii {
    let profile = match &domain.shape {
        Shape::Interval { half_width } => {
            return BallRadii {
                interior: *half_width,
                exterior: None,
            }
        }
        Shape::StarShaped(p) => p,
    };
    let samples: Vec<([f64; 2], [f64; 2])> = (0..BALL_SAMPLES)
        .map(|i| {
            let phi = 2.0 * PI * i as f64 / BALL_SAMPLES as f64;
            (profile.point(phi), profile.normal(phi))
        })
        .collect();
    let admissible = |r: f64, outside: bool| {
        let sign = if outside { 1.0 } else { -1.0 };
        let r2 = r * r * (1.0 - 1e-9);
        samples.iter().all(|(p, n)| {
            let c = [p[0] + sign * r * n[0], p[1] + sign * r * n[1]];
            profile.contains(c) != outside
                && samples.iter().all(|(q, _)| (q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2) >= r2)
        })
    };
    let extent = profile.max_rho();
    let search = |outside: bool, hi: f64| -> Option<f64> {
        // largest admissible radius on the log grid, then bisection
        let mut lo = extent * 1e-4;
        if !admissible(lo, outside) {
            return Some(0.0);
        }
        let mut up = lo;
        while up < hi {
            up *= 2.0;
            if !admissible(up, outside) {
                break;
            }
            lo = up;
        }
        if up >= hi && admissible(hi, outside) {
            return None;
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + up);
            if admissible(mid, outside) {
                lo = mid;
            } else {
                up = mid;
            }
        }
        Some(lo)
    };
    let interior = search(false, 2.0 * extent).unwrap_or(extent);
    let exterior = if profile.mean_convex() { None } else { search(true, 1e3 * extent) };
    BallRadii { interior, exterior }
}

/// Node geometry of one solution, shared by the checks.
#[derive(Debug, Clone)]
pub struct SolutionAnalysis {
    pub domain: Domain,
    pub grid: GridTopology,
    pub spec: CurvatureSpec,
    pub sigma: f64,
    pub solution: GridFunction,
    pub geometry: Vec<PointGeometry>,
}

impl SolutionAnalysis {
    pub fn new(domain: &Domain, spec: &CurvatureSpec, sigma: f64, solution: &GridFunction) -> Result<Self, VerifyError> {
        let grid = build_grid(domain)?;
        let geometry = grid_geometry(&grid, &solution.values)?;
        Ok(Self {
            domain: domain.clone(),
            grid,
            spec: spec.clone(),
            sigma,
            solution: solution.clone(),
            geometry,
        })
    }

    /// `10 h²`, the discretization tolerance.
    pub fn tol(&self) -> f64 {
        let h = self.grid.spacing();
        10.0 * h * h
    }

    pub fn eps(&self) -> f64 {
        self.solution.boundary
    }

    pub fn interior(&self) -> impl Iterator<Item = &PointGeometry> + '_ {
        self.geometry.iter().enumerate().filter(|(p, _)| !self.grid.is_boundary(*p)).map(|(_, g)| g)
    }

    pub fn boundary(&self) -> impl Iterator<Item = &PointGeometry> + '_ {
        self.geometry.iter().enumerate().filter(|(p, _)| self.grid.is_boundary(*p)).map(|(_, g)| g)
    }

    pub fn max_u(&self) -> f64 {
        self.solution.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn eta(&self) -> Vec<f64> {
        self.geometry.iter().map(|g| g.eta(self.sigma)).collect()
    }

    pub fn linearize(&self) -> Result<LinearizedOperator, VerifyError> {
        Ok(linearize(&self.grid, &self.solution, &self.spec)?)
    }
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::INFINITY, f64::min)
}

/// `M = √(1-σ²)/r_2 + ε(1+σ)/r_2²`.
pub fn exterior_constant(sigma: f64, eps: f64, balls: &BallRadii) -> f64 {
    let k = balls.inv_exterior();
    (1.0 - sigma * sigma).sqrt() * k + eps * (1.0 + sigma) * k * k
}

/// `η` attains its maximum on the boundary, and is bounded by `M` when the
/// domain has a finite exterior ball radius.
pub fn max_principle_check(a: &SolutionAnalysis, balls: &BallRadii) -> Vec<ScoreEntry> {
    let eta = |g: &PointGeometry| g.eta(a.sigma);
    let norm = max_of(a.geometry.iter().map(|g| eta(g).abs()));
    let tol = a.tol() * norm;
    let interior = max_of(a.interior().map(eta));
    let boundary = max_of(a.boundary().map(eta));
    let mut out = vec![ScoreEntry::le("max_principle.eta", interior, boundary, tol)];
    if balls.exterior.is_some() {
        let m = exterior_constant(a.sigma, a.eps(), balls);
        out.push(ScoreEntry::le("max_principle.eta_exterior_bound", max_of(a.geometry.iter().map(eta)), m, tol));
    }
    out
}

/// The constant `a` with `2a = σ/(1 + M max u)`.
pub fn convexity_constant(a: &SolutionAnalysis, balls: &BallRadii) -> f64 {
    let m = exterior_constant(a.sigma, a.eps(), balls);
    0.5 * a.sigma / (1.0 + m * a.max_u())
}

/// Global curvature bound `κ_max ≤ 8a^{-5/2}` and its weighted form with
/// `b = a/4`, after checking the hypothesis `ν^{n+1} ≥ 2a`.
pub fn curvature_bound_check(a: &SolutionAnalysis, balls: &BallRadii) -> Vec<ScoreEntry> {
    let c = convexity_constant(a, balls);
    let tol = a.tol();
    let min_nu = min_of(a.geometry.iter().map(|g| g.nu));
    let mut hyp = ScoreEntry::ge("curvature_bound.hypothesis_nu", min_nu, 2.0 * c, tol);
    if balls.exterior.is_some() && !hyp.pass {
        hyp = hyp.informational("hypothesis unmet; bound not implied");
    }
    let bound = 8.0 * c.powf(-2.5);
    let kmax = max_of(a.interior().map(|g| g.kappa_max()));
    let b = c / 4.0;
    let sup_u = a.max_u();
    let weighted = max_of(a.interior().map(|g| g.u.powf(b) * g.kappa_max() / (g.nu - c)));
    vec![
        hyp,
        ScoreEntry::lt("curvature_bound.kappa_max", kmax, bound, 0.0),
        ScoreEntry::lt("curvature_bound.weighted", weighted, bound * sup_u.powf(b), 0.0),
    ]
}

/// Extrapolates per-node values to `ε = 0` by the quadratic through the last
/// three `(ε, value)` levels. Successive differences below `noise` (relative
/// to the value, at least absolute) do not count against monotonicity.
pub fn richardson(levels: &[(f64, Vec<f64>)], noise: f64) -> Result<Vec<f64>, VerifyError> {
    if levels.len() < 3 {
        return Err(VerifyError::TooFewLevels {
            needed: 3,
            got: levels.len(),
        });
    }
    let last = &levels[levels.len() - 3..];
    let e: Vec<f64> = last.iter().map(|l| l.0).collect();
    let weights: Vec<f64> = (0..3)
        .map(|i| (0..3).filter(|&j| j != i).map(|j| e[j] / (e[j] - e[i])).product())
        .collect();
    let n = last[0].1.len();
    (0..n)
        .map(|k| {
            let v: Vec<f64> = last.iter().map(|l| l.1[k]).collect();
            let (d1, d2) = (v[1] - v[0], v[2] - v[1]);
            let noise = noise * v[2].abs().max(1.0);
            if d1 * d2 < 0.0 && d1.abs() > noise && d2.abs() > noise {
                return Err(VerifyError::ExtrapolationUnstable(format!(
                    "node {k}: values {:?} are not monotone in eps",
                    v
                )));
            }
            Ok(v.iter().zip(&weights).map(|(a, b)| a * b).sum())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryAngleReport {
    /// Extrapolated boundary `w`, one per boundary node.
    pub w_extrapolated: Vec<f64>,
    /// Largest ladder `ε` at which the two-sided boundary bound held.
    pub largest_eps_two_sided: Option<f64>,
    pub entries: Vec<ScoreEntry>,
}

fn boundary_field(grid: &GridTopology, u: &GridFunction, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let ders = grid.differentiate(&u.values);
    grid.boundary_nodes()
        .into_iter()
        .map(|p| f((1.0 + ders[p].du.norm_squared()).sqrt()))
        .collect()
}

/// Boundary angle: the extrapolated `w` on the boundary approaches `1/σ`, and
/// at every level `ν^{n+1} - σ` satisfies the two-sided ball bound.
pub fn boundary_angle_check(
    domain: &Domain,
    sigma: f64,
    levels: &[LevelSolution],
    balls: &BallRadii,
) -> Result<BoundaryAngleReport, VerifyError> {
    let grid = build_grid(domain)?;
    let series: Vec<(f64, Vec<f64>)> = levels
        .iter()
        .map(|l| (l.eps, boundary_field(&grid, &l.solution, |w| w)))
        .collect();
    let h = grid.spacing();
    let tol = 10.0 * h * h;
    let w = richardson(&series, tol)?;
    let target = 1.0 / sigma;
    let dev = max_of(w.iter().map(|x| (x - target).abs()));
    let mut entries = vec![ScoreEntry::le("boundary_angle.w_extrapolated", dev, 0.02 * target, 0.0)];

    let s = (1.0 - sigma * sigma).sqrt();
    let inv1 = 1.0 / balls.interior;
    let inv2 = balls.inv_exterior();
    let bounds = |eps: f64| {
        (
            -eps * s * inv2 - eps * eps * (1.0 + sigma) * inv2 * inv2,
            eps * s * inv1 + eps * eps * (1.0 - sigma) * inv1 * inv1,
        )
    };
    let check = |eps: f64, ws: &[f64]| {
        let (lower, upper) = bounds(eps);
        [
            ScoreEntry::gt("boundary_angle.two_sided_lower", min_of(ws.iter().map(|w| 1.0 / w - sigma)), lower, tol),
            ScoreEntry::lt("boundary_angle.two_sided_upper", max_of(ws.iter().map(|w| 1.0 / w - sigma)), upper, tol),
        ]
    };
    let largest = series
        .iter()
        .find(|(eps, ws)| check(*eps, ws).iter().all(|e| e.pass))
        .map(|(eps, _)| *eps);
    // asserted at the smallest ε; the other levels are summarized by `largest`
    if let Some((eps, ws)) = series.last() {
        entries.extend(check(*eps, ws));
    }
    Ok(BoundaryAngleReport {
        w_extrapolated: w,
        largest_eps_two_sided: largest,
        entries,
    })
}

/// Convexity of `u² + |x|²`, starshapedness, the sign of `G_u` on mean convex
/// domains, the gradient bound `ν^{n+1} ≥ u/max u` and the pointwise
/// identities relating the two routes to `κ` and to `G_u`.
pub fn structure_checks(a: &SolutionAnalysis, op: &LinearizedOperator) -> Vec<ScoreEntry> {
    let tol = a.tol();
    let n = a.grid.dim();
    let mut out = Vec::new();

    let min_q = min_of(a.interior().map(|g| {
        let q = (DMatrix::identity(n, n) + &g.du * g.du.transpose() + &g.d2u * g.u) * 2.0;
        min_eigenvalue(&q).unwrap_or(f64::NAN)
    }));
    out.push(ScoreEntry::gt("structure.convex_u2_plus_x2", min_q, 0.0, 0.0));

    let star: Vec<f64> = a.geometry.iter().map(|g| g.starshape()).collect();
    let star_min = min_of(star.iter().copied());
    let star_interior_max = max_of(a.grid.interior_nodes().into_iter().map(|p| star[p]));
    let star_boundary_max = max_of(a.grid.boundary_nodes().into_iter().map(|p| star[p]));
    let star_norm = max_of(star.iter().map(|s| s.abs()));
    out.push(ScoreEntry::gt("structure.starshape_positive", star_min, 0.0, 0.0));
    // 𝓛(u - x·Du) = 0 with zeroth-order coefficient G_u < 0 makes the field a
    // subsolution: its maximum, not its minimum, sits on the boundary
    let g_u_max = max_of(op.nodes.iter().flatten().map(|o| o.g_u));
    let e = ScoreEntry::le("structure.starshape_boundary_max", star_interior_max, star_boundary_max, tol * star_norm);
    out.push(if g_u_max < 0.0 { e } else { e.informational("G_u changes sign") });
    // u - x·Du = w (X·ν) with the unit normal ν = (-Du, 1)/w
    let star_identity = max_of(a.geometry.iter().map(|g| {
        let x_dot_nu = (g.u - g.x.dot(&g.du)) / g.w;
        (g.starshape() - g.w * x_dot_nu).abs()
    }));
    out.push(ScoreEntry::le("structure.starshape_identity", star_identity, 0.0, 1e-12));

    let mean_convex = a.domain.profile().is_none_or(|p| p.mean_convex());
    let e = ScoreEntry::lt("structure.g_u_negative", g_u_max, 0.0, 0.0);
    out.push(if mean_convex { e } else { e.informational("domain not mean convex") });

    let max_u = a.max_u();
    let gap = min_of(a.geometry.iter().map(|g| g.nu - g.u / max_u));
    out.push(ScoreEntry::ge("structure.nu_vs_height", gap, 0.0, tol));

    let pairing = max_of(
        a.interior()
            .flat_map(|g| g.kappa.iter().zip(&g.kappa_e).map(move |(k, ke)| (k - (g.u * ke + g.nu)).abs())),
    );
    out.push(ScoreEntry::le("identity.curvature_relation", pairing, 0.0, 1e-10));
    let gamma = max_of(a.geometry.iter().map(|g| {
        let m = &g.gamma * &g.gamma * (DMatrix::identity(n, n) + &g.du * g.du.transpose());
        (m - DMatrix::identity(n, n)).abs().max()
    }));
    out.push(ScoreEntry::le("identity.gamma_square", gamma, 0.0, 1e-10));
    let pencil = max_of(a.interior().map(|g| match g.tensors().principal_curvatures() {
        Ok(k) => k.iter().zip(&g.kappa).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    }));
    out.push(ScoreEntry::le("identity.pencil_curvatures", pencil, 0.0, 1e-9));

    let (mut contraction, mut routes) = (0.0f64, 0.0f64);
    for (p, o) in op.nodes.iter().enumerate() {
        if let Some(o) = o {
            let g = &a.geometry[p];
            let lhs = o.g_st.component_mul(&g.d2u).sum();
            contraction = contraction.max((lhs - g.u * o.g_u).abs());
            routes = routes.max((g.u * o.g_u - (o.g - o.trace_f / o.w)).abs());
        }
    }
    out.push(ScoreEntry::le("identity.g_st_contraction", contraction, 0.0, 1e-9));
    out.push(ScoreEntry::le("identity.g_u_routes", routes, 0.0, 1e-9));
    out
}

/// `‖𝓛(u - x·Du)‖∞` and `‖𝓛 u_k‖∞` over interior nodes. Both fields are
/// annihilated by the continuous linearization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelResiduals {
    pub starshape: f64,
    pub translations: Vec<f64>,
}

pub fn kernel_residuals(a: &SolutionAnalysis, op: &LinearizedOperator) -> KernelResiduals {
    let norm = |v: Vec<f64>| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let star: Vec<f64> = a.geometry.iter().map(|g| g.starshape()).collect();
    let translations = (0..a.grid.dim())
        .map(|k| {
            let field: Vec<f64> = a.geometry.iter().map(|g| g.du[k]).collect();
            norm(op.apply(&a.grid, &field))
        })
        .collect();
    KernelResiduals {
        starshape: norm(op.apply(&a.grid, &star)),
        translations,
    }
}

/// Runs every check on a finished continuation solve.
pub fn verify(report: &SolveReport) -> Result<Scorecard, VerifyError> {
    let spec = report.solved_spec();
    let a = SolutionAnalysis::new(&report.domain, &spec, report.sigma, &report.solution)?;
    let balls = ball_radii(&report.domain);
    let op = a.linearize()?;
    let mut card = Scorecard::default();
    card.extend(max_principle_check(&a, &balls));
    card.extend(curvature_bound_check(&a, &balls));
    match boundary_angle_check(&report.domain, report.sigma, &report.levels, &balls) {
        Ok(b) => card.extend(b.entries),
        Err(VerifyError::TooFewLevels { .. }) => {}
        Err(e) => return Err(e),
    }
    card.extend(structure_checks(&a, &op));
    card.extend(desitter::duality_checks(&a)?);
    if report.levels.len() >= 3 {
        card.extend(desitter::dual_boundary_check(&report.domain, report.sigma, &report.levels)?);
    }
    Ok(card)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::RadialProfile;
    use crate::oracle::Cap;

    fn shaped(profile: RadialProfile) -> Domain {
        Domain::new(Shape::StarShaped(profile), 8, 16).unwrap()
    }

    /// Signed curvature of `r = ρ(φ)` at `phi`.
    fn polar_curvature(p: &RadialProfile, phi: f64) -> f64 {
        let (r, r1, r2) = p.eval(phi);
        (r * r + 2.0 * r1 * r1 - r * r2) / (r * r + r1 * r1).powf(1.5)
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn entry_margins() {
        let e = ScoreEntry::le("x", 1.0, 2.0, 0.1);
        assert!(e.pass && (e.margin - 1.1).abs() < 1e-15);
        let e = ScoreEntry::lt("x", 2.0, 2.0, 0.0);
        assert!(!e.pass && e.margin == 0.0);
        let e = ScoreEntry::ge("x", 1.0, 1.05, 0.1);
        assert!(e.pass && (e.margin - 0.05).abs() < 1e-15);
        let e = ScoreEntry::gt("x", 0.0, 1.0, 0.0).informational("skipped");
        assert!(e.pass && e.margin < 0.0 && e.note.is_some());
        let json = serde_json::to_string(&ScoreEntry::le("y", 0.0, 1.0, 0.0)).unwrap();
        assert!(json.contains("\"relation\":\"<=\"") && !json.contains("note"));
    }

    #[test]
    fn disk_ball_radii() {
        let b = ball_radii(&shaped(RadialProfile::disk(0.8)));
        assert!(close(b.interior, 0.8, 0.02), "{b:?}");
        assert_eq!(b.exterior, None);
    }

    #[test]
    fn ellipse_ball_radii() {
        let b = ball_radii(&shaped(RadialProfile::Ellipse { a: 1.0, b: 0.5 }));
        // smallest radius of curvature b²/a at the ends of the major axis
        assert!(close(b.interior, 0.25, 0.02), "{b:?}");
        assert_eq!(b.exterior, None);
    }

    #[test]
    fn star_ball_radii_match_curvature_extremes() {
        let p = RadialProfile::star(1.0, 0.3, 5);
        let b = ball_radii(&shaped(p.clone()));
        let curv: Vec<f64> = (0..20000).map(|i| polar_curvature(&p, 2.0 * PI * i as f64 / 20000.0)).collect();
        let kmax = curv.iter().copied().fold(f64::MIN, f64::max);
        let kmin = curv.iter().copied().fold(f64::MAX, f64::min);
        assert!(kmin < 0.0);
        assert!(close(b.interior, 1.0 / kmax, 0.02), "{b:?} {}", 1.0 / kmax);
        let ext = b.exterior.expect("finite exterior radius");
        assert!(close(ext, -1.0 / kmin, 0.02), "{ext} {}", -1.0 / kmin);
    }

    #[test]
    fn richardson_recovers_quadratic_limit() {
        let levels: Vec<(f64, Vec<f64>)> =
            [0.04, 0.02, 0.01].iter().map(|&e| (e, vec![2.0 + 3.0 * e - 5.0 * e * e, 1.0 - e])).collect();
        let v = richardson(&levels, 1e-6).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
        assert!(matches!(
            richardson(&levels[..2], 1e-6),
            Err(VerifyError::TooFewLevels { needed: 3, got: 2 })
        ));
        let wobbly = vec![(0.04, vec![1.0]), (0.02, vec![1.1]), (0.01, vec![1.0])];
        assert!(matches!(richardson(&wobbly, 1e-6), Err(VerifyError::ExtrapolationUnstable(_))));
        assert!(richardson(&wobbly, 0.2).is_ok());
    }

    fn cap_analysis(n: usize, sigma: f64, eps: f64) -> SolutionAnalysis {
        let rho = (1.0 - sigma * sigma).sqrt();
        let domain = Domain::disk(rho, n, 2 * n).unwrap();
        let grid = build_grid(&domain).unwrap();
        let cap = Cap::matched(sigma, rho, eps);
        let values = grid.positions().iter().map(|x| cap.u(x)).collect();
        let u = GridFunction::with_boundary(&grid, values, eps);
        SolutionAnalysis::new(&domain, &CurvatureSpec::mean(2), sigma, &u).unwrap()
    }

    #[test]
    fn cap_constants() {
        let a = cap_analysis(16, 0.5, 1e-3);
        let balls = ball_radii(&a.domain);
        assert_eq!(exterior_constant(0.5, 1e-3, &balls), 0.0);
        assert_eq!(convexity_constant(&a, &balls), 0.25);
        let entries = curvature_bound_check(&a, &balls);
        let bound = entries.iter().find(|e| e.check_id == "curvature_bound.kappa_max").unwrap();
        assert_eq!(bound.rhs, 256.0);
        assert!(bound.pass && (bound.lhs - 0.5).abs() < 1e-2);
        assert!(entries.iter().all(|e| e.pass), "{entries:?}");
    }

    #[test]
    fn cap_structure_entries_pass() {
        let a = cap_analysis(32, 0.5, 0.02);
        let op = a.linearize().unwrap();
        let entries = structure_checks(&a, &op);
        assert!(entries.iter().all(|e| e.pass && e.note.is_none()), "{entries:#?}");
        // u - x·Du at x = (0.6, 0) on the R = 1 cap equals 1/s - σR = 0.75
        let cap = Cap::new(0.5, 1.0);
        let x = nalgebra::DVector::from_column_slice(&[0.6, 0.0]);
        assert!((cap.u(&x) - x.dot(&cap.du(&x)) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn cap_eta_is_flat_at_moderate_eps() {
        let a = cap_analysis(32, 0.5, 0.05);
        let entries = max_principle_check(&a, &ball_radii(&a.domain));
        assert_eq!(entries.len(), 1);
        assert!(entries[0].pass, "{entries:?}");
        let target = Cap::matched(0.5, 0.75f64.sqrt(), 0.05).eta();
        assert!(a.eta().iter().all(|e| (e - target).abs() < 2e-2));
    }

    #[test]
    fn cap_kernel_residuals_shrink() {
        let r: Vec<KernelResiduals> = [16, 32]
            .iter()
            .map(|&n| {
                let a = cap_analysis(n, 0.5, 0.02);
                kernel_residuals(&a, &a.linearize().unwrap())
            })
            .collect();
        assert!((r[0].starshape / r[1].starshape).log2() >= 1.5, "{r:?}");
        for k in 0..2 {
            assert!((r[0].translations[k] / r[1].translations[k]).log2() >= 1.5, "{r:?}");
        }
    }
}
