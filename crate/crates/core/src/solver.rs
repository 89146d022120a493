//! Damped Newton iteration for `F(A[u]) = σ`, `u = ε` on the boundary, and
//! the continuation ladders (σ-homotopy, θ-blend, ε) that reach it from the
//! horosphere `u ≡ ε`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curvature::{CurvatureSpec, MatrixEval};
use crate::domain::Domain;
use crate::error::{CurvatureError, SolveError};
use crate::geometry::{shape_matrices, ShapeMatrices};
use crate::grid::{build_grid, GridTopology, NodeWeights};
use crate::linalg::{min_eigenvalue, BlockBanded};

/// Node values of the height function together with its Dirichlet value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub values: Vec<f64>,
    pub boundary: f64,
}

impl GridFunction {
    /// The horosphere `u ≡ ε`.
    pub fn constant(grid: &GridTopology, eps: f64) -> Self {
        Self {
            values: vec![eps; grid.len()],
            boundary: eps,
        }
    }

    /// Sets every boundary node to the Dirichlet value.
    pub fn with_boundary(grid: &GridTopology, mut values: Vec<f64>, eps: f64) -> Self {
        for p in grid.boundary_nodes() {
            values[p] = eps;
        }
        Self { values, boundary: eps }
    }

    /// Shifts the whole graph vertically so that the boundary value becomes `eps`.
    pub fn shifted(&self, eps: f64) -> Self {
        let d = eps - self.boundary;
        Self {
            values: self.values.iter().map(|v| v + d).collect(),
            boundary: eps,
        }
    }
}

/// `G`, `A[u]` and `F^{ij}` at one node.
fn node_eval(
    spec: &CurvatureSpec,
    u: f64,
    du: &DVector<f64>,
    d2u: &DMatrix<f64>,
) -> Result<(ShapeMatrices, MatrixEval), CurvatureError> {
    let s = shape_matrices(u, du, d2u);
    let m = spec.matrix_derivative(&s.a)?;
    Ok((s, m))
}

/// Residual of one iterate.
#[derive(Debug, Clone)]
struct Evaluation {
    /// `G - σ` at interior nodes, `u - ε` at boundary nodes.
    residual: Vec<f64>,
    /// smallest eigenvalue of `A[u]` over interior nodes
    min_kappa: f64,
}

impl Evaluation {
    fn norm(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

fn evaluate(grid: &GridTopology, u: &GridFunction, spec: &CurvatureSpec, sigma: f64) -> Result<Evaluation, SolveError> {
    let ders = grid.differentiate(&u.values);
    let mut residual = vec![0.0; grid.len()];
    let mut lost = Vec::new();
    let mut min_kappa = f64::INFINITY;
    for (p, d) in ders.iter().enumerate() {
        if grid.is_boundary(p) {
            residual[p] = u.values[p] - u.boundary;
            continue;
        }
        let up = u.values[p];
        if !(up > 0.0) {
            lost.push(p);
            continue;
        }
        let s = shape_matrices(up, &d.du, &d.d2u);
        let k = min_eigenvalue(&s.a)?;
        if !(k > 0.0) {
            lost.push(p);
            continue;
        }
        min_kappa = min_kappa.min(k);
        residual[p] = spec.matrix_derivative(&s.a)?.value - sigma;
    }
    if !lost.is_empty() {
        return Err(SolveError::ConvexityLoss(lost));
    }
    Ok(Evaluation { residual, min_kappa })
}

/// `G(D²u, Du, u) - σ` at interior nodes and `u - ε` at boundary nodes.
pub fn residual(grid: &GridTopology, u: &GridFunction, spec: &CurvatureSpec, sigma: f64) -> Result<Vec<f64>, SolveError> {
    Ok(evaluate(grid, u, spec, sigma)?.residual)
}

/// Coefficients of the linearized operator at one interior node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeOperator {
    pub g: f64,
    pub w: f64,
    /// `Σ F^{ii}`
    pub trace_f: f64,
    /// `G^{st} = (u/w) (γ F γ)_{st}`
    pub g_st: DMatrix<f64>,
    /// `G^s`, by central differences in the `Du` slots
    pub g_s: DVector<f64>,
    /// `G_u = F^{ij} a^e_ij`
    pub g_u: f64,
    /// `G_u` through `(G - Σ F^{ii}/w)/u`
    pub g_u_alt: f64,
}

/// `𝓛 = G^{st}∂_st + G^s∂_s + G_u` on a grid, with its Dirichlet assembly.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    /// `None` at boundary nodes.
    pub nodes: Vec<Option<NodeOperator>>,
    pub matrix: BlockBanded,
}

impl LinearizedOperator {
    /// `𝓛φ` at interior nodes (zero on the boundary), using the boundary
    /// values of `phi` as given.
    pub fn apply(&self, grid: &GridTopology, phi: &[f64]) -> Vec<f64> {
        grid.differentiate(phi)
            .iter()
            .zip(&self.nodes)
            .enumerate()
            .map(|(p, (d, op))| match op {
                Some(op) => (&op.g_st.component_mul(&d.d2u)).sum() + op.g_s.dot(&d.du) + op.g_u * phi[p],
                None => 0.0,
            })
            .collect()
    }
}

/// Relative step for the `G^s` differences.
const GRADIENT_STEP: f64 = 1e-6;

/// `G^s` by central differences. Near the edge of the cone the perturbed
/// arguments may leave it; the step is then shrunk, and `None` returned if
/// that does not help.
fn gradient_coefficients(spec: &CurvatureSpec, u: f64, du: &DVector<f64>, d2u: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = du.len();
    let mut step = GRADIENT_STEP * (1.0 + du.norm());
    'retry: for _ in 0..4 {
        let mut g_s = DVector::zeros(n);
        for k in 0..n {
            let mut plus = du.clone();
            let mut minus = du.clone();
            plus[k] += step;
            minus[k] -= step;
            match (node_eval(spec, u, &plus, d2u), node_eval(spec, u, &minus, d2u)) {
                (Ok(a), Ok(b)) => g_s[k] = (a.1.value - b.1.value) / (2.0 * step),
                _ => {
                    step *= 0.1;
                    continue 'retry;
                }
            }
        }
        return Some(g_s);
    }
    None
}

/// Linearization coefficients at one node; `None` when `u ≤ 0`, `A[u]` is
/// outside the cone, or `G^s` cannot be differenced inside it.
pub fn node_operator(
    spec: &CurvatureSpec,
    u: f64,
    du: &DVector<f64>,
    d2u: &DMatrix<f64>,
) -> Result<Option<NodeOperator>, CurvatureError> {
    let (s, m) = match node_eval(spec, u, du, d2u) {
        Ok(v) if u > 0.0 => v,
        Ok(_) | Err(CurvatureError::OutsideCone(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let f = &m.derivative;
    let g_st = &s.gamma * f * &s.gamma * (u / s.w);
    let trace_f = f.trace();
    let Some(g_s) = gradient_coefficients(spec, u, du, d2u) else {
        return Ok(None);
    };
    Ok(Some(NodeOperator {
        g: m.value,
        w: s.w,
        trace_f,
        g_st,
        g_s,
        g_u: f.component_mul(&s.a_e).sum(),
        g_u_alt: (m.value - trace_f / s.w) / u,
    }))
}

/// Linearizes `G` about `u`. Fails like [`residual`] when `A[u]` leaves the cone.
pub fn linearize(grid: &GridTopology, u: &GridFunction, spec: &CurvatureSpec) -> Result<LinearizedOperator, SolveError> {
    let ders = grid.differentiate(&u.values);
    let n = grid.dim();
    let mut nodes = Vec::with_capacity(grid.len());
    let mut weights = Vec::with_capacity(grid.len());
    let mut lost = Vec::new();
    for (p, d) in ders.iter().enumerate() {
        let op = if grid.is_boundary(p) {
            None
        } else {
            let op = node_operator(spec, u.values[p], &d.du, &d.d2u)?;
            if op.is_none() {
                lost.push(p);
            }
            op
        };
        weights.push(match &op {
            Some(op) => NodeWeights {
                grad: op.g_s.clone(),
                hess: op.g_st.clone(),
                value: op.g_u,
            },
            None => NodeWeights {
                grad: DVector::zeros(n),
                hess: DMatrix::zeros(n, n),
                value: 0.0,
            },
        });
        nodes.push(op);
    }
    if !lost.is_empty() {
        return Err(SolveError::ConvexityLoss(lost));
    }
    let matrix = grid.assemble(&weights);
    Ok(LinearizedOperator { nodes, matrix })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Residual tolerance; `None` means `1e-9·max(1, σ)`.
    pub tol_res: Option<f64>,
    pub kappa_floor: f64,
    pub max_halvings: usize,
    pub max_iterations: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol_res: None,
            kappa_floor: 1e-8,
            max_halvings: 30,
            max_iterations: 50,
        }
    }
}

impl NewtonOptions {
    pub fn tolerance(&self, sigma: f64) -> f64 {
        self.tol_res.unwrap_or(1e-9 * sigma.max(1.0))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NewtonTrace {
    pub iterations: usize,
    /// `‖G - σ‖∞` before the first and after every accepted step.
    pub residuals: Vec<f64>,
    /// Total step halvings over all iterations.
    pub halvings: usize,
    pub min_kappa: f64,
}

/// Damped Newton iteration from `u0`. Every accepted iterate lowers the
/// residual and keeps the smallest eigenvalue of `A[u]` above the floor.
pub fn newton_solve(
    grid: &GridTopology,
    u0: &GridFunction,
    spec: &CurvatureSpec,
    sigma: f64,
    opts: &NewtonOptions,
) -> Result<(GridFunction, NewtonTrace), SolveError> {
    let tol = opts.tolerance(sigma);
    let mut u = GridFunction::with_boundary(grid, u0.values.clone(), u0.boundary);
    let mut eval = evaluate(grid, &u, spec, sigma)?;
    let mut trace = NewtonTrace {
        residuals: vec![eval.norm()],
        min_kappa: eval.min_kappa,
        ..Default::default()
    };
    while eval.norm() > tol {
        if trace.iterations == opts.max_iterations {
            return Err(SolveError::IterationLimit(opts.max_iterations));
        }
        let lin = linearize(grid, &u, spec)?;
        let rhs = -grid.gather(&eval.residual);
        let delta = lin.matrix.solve(&rhs).ok_or(SolveError::SingularJacobian)?;
        let delta = grid.scatter(&delta, 0.0);
        let mut lambda = 1.0;
        let mut halvings = 0;
        loop {
            let trial = GridFunction {
                values: u.values.iter().zip(&delta).map(|(a, b)| a + lambda * b).collect(),
                boundary: u.boundary,
            };
            if let Ok(e) = evaluate(grid, &trial, spec, sigma) {
                if e.min_kappa >= opts.kappa_floor && e.norm() < eval.norm() {
                    u = trial;
                    eval = e;
                    break;
                }
            }
            if halvings == opts.max_halvings {
                return Err(SolveError::NoProgress(halvings));
            }
            halvings += 1;
            lambda *= 0.5;
        }
        trace.iterations += 1;
        trace.halvings += halvings;
        trace.residuals.push(eval.norm());
        trace.min_kappa = eval.min_kappa;
    }
    Ok((u, trace))
}

/// The three continuation ladders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Homotopy parameters `0 = t_0 < … < t_K = 1`, with `σ^t = tσ + (1 - t)`.
    pub t: Vec<f64>,
    /// Blend weights, strictly decreasing; ignored for the Gauss curvature.
    pub theta: Vec<f64>,
    /// Boundary values, strictly decreasing and positive.
    pub eps: Vec<f64>,
}

impl Schedule {
    pub fn default_for(domain: &Domain) -> Self {
        let eps0 = 0.05 * domain.max_extent();
        Self {
            t: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            theta: vec![0.5, 0.25, 0.1, 0.02, 0.0],
            eps: (0..=6).map(|k| eps0 * 0.5f64.powi(k)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: &str| Err(SolveError::InvalidSchedule(m.to_string()));
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if self.t.first() != Some(&0.0) || self.t.last() != Some(&1.0) || !increasing(&self.t) {
            return bad("t must increase from 0 to 1");
        }
        if !self.theta.iter().all(|t| (0.0..=1.0).contains(t)) || !self.theta.windows(2).all(|w| w[0] > w[1]) {
            return bad("theta must decrease within [0, 1]");
        }
        if self.eps.is_empty() || !self.eps.iter().all(|e| *e > 0.0) || !self.eps.windows(2).all(|w| w[0] > w[1]) {
            return bad("eps must be positive and decreasing");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub newton: NewtonOptions,
    /// Bisections allowed within a single ladder step.
    pub max_bisections: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            newton: NewtonOptions::default(),
            max_bisections: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ladder {
    T,
    Theta,
    Eps,
}

/// One Newton solve along the continuation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub ladder: Ladder,
    pub eps: f64,
    pub theta: f64,
    pub t: f64,
    pub sigma_t: f64,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub halvings: usize,
    pub kappa_max: f64,
    pub kappa_min: f64,
    /// Set when this stage was a bisected substep.
    pub bisected: bool,
}

/// Converged solution at one level of the ε-ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSolution {
    pub eps: f64,
    pub solution: GridFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub domain: Domain,
    pub spec: CurvatureSpec,
    pub sigma: f64,
    pub schedule: Schedule,
    /// Smallest blend weight reached (0 unless the θ-ladder stalled).
    pub theta_reached: f64,
    pub stages: Vec<StageRecord>,
    pub levels: Vec<LevelSolution>,
    pub solution: GridFunction,
    pub final_residual: f64,
}

impl SolveReport {
    /// The curvature function actually solved for at the end of the path.
    pub fn solved_spec(&self) -> CurvatureSpec {
        spec_at(&self.spec, self.theta_reached)
    }
}

fn spec_at(spec: &CurvatureSpec, theta: f64) -> CurvatureSpec {
    if theta == 0.0 || spec.is_gauss() {
        spec.clone()
    } else {
        spec.clone().blend(theta)
    }
}

fn recoverable(e: &SolveError) -> bool {
    matches!(
        e,
        SolveError::NoProgress(_) | SolveError::SingularJacobian | SolveError::ConvexityLoss(_) | SolveError::IterationLimit(_)
    )
}

/// Walks `current` through `targets`, calling `step(from, to)` on each move
/// and bisecting a failing move up to `max_bisections` times. Returns the
/// last value reached and the error that stopped the walk, if any.
fn walk(
    mut current: f64,
    targets: &[f64],
    max_bisections: usize,
    mut step: impl FnMut(f64, f64, bool) -> Result<(), SolveError>,
) -> (f64, Option<SolveError>) {
    for &target in targets {
        if target == current {
            continue;
        }
        let mut goal = target;
        let mut bisections = 0;
        loop {
            match step(current, goal, bisections > 0) {
                Ok(()) => {
                    current = goal;
                    if goal == target {
                        break;
                    }
                    goal = target;
                }
                Err(e) if recoverable(&e) && bisections < max_bisections => {
                    bisections += 1;
                    goal = 0.5 * (current + goal);
                }
                Err(e) => return (current, Some(e)),
            }
        }
    }
    (current, None)
}

fn kappa_range(grid: &GridTopology, u: &GridFunction) -> (f64, f64) {
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    for (p, d) in grid.differentiate(&u.values).iter().enumerate() {
        if grid.is_boundary(p) {
            continue;
        }
        let s = shape_matrices(u.values[p], &d.du, &d.d2u);
        if let Ok(k) = crate::linalg::sym_eigenvalues(&s.a) {
            range.0 = range.0.min(k[0]);
            range.1 = range.1.max(k[k.len() - 1]);
        }
    }
    range
}

/// Solves `f(κ) = σ`, `u = ε_L` on `∂Ω` from the horosphere: the σ-homotopy at
/// `ε_0` (with the first blend weight), then the θ-ladder, then the ε-ladder.
pub fn continuation_solve(
    domain: &Domain,
    spec: &CurvatureSpec,
    sigma: f64,
    schedule: &Schedule,
    opts: &ContinuationOptions,
) -> Result<SolveReport, SolveError> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(SolveError::InvalidSchedule(format!("sigma = {sigma} must lie in (0,1)")));
    }
    schedule.validate()?;
    spec.validate()?;
    if spec.dim() != domain.dim() {
        return Err(CurvatureError::Dimension {
            spec: spec.dim(),
            arg: domain.dim(),
        }
        .into());
    }
    let grid = build_grid(domain)?;
    let thetas: Vec<f64> = if spec.is_gauss() { Vec::new() } else { schedule.theta.clone() };
    let theta0 = thetas.first().copied().unwrap_or(0.0);
    let eps0 = schedule.eps[0];

    let mut u = GridFunction::constant(&grid, eps0);
    let mut stages = Vec::new();
    let (kmin, kmax) = kappa_range(&grid, &u);
    let start_res = evaluate(&grid, &u, &spec_at(spec, theta0), 1.0)?.norm();
    stages.push(StageRecord {
        ladder: Ladder::T,
        eps: eps0,
        theta: theta0,
        t: 0.0,
        sigma_t: 1.0,
        iterations: 0,
        residuals: vec![start_res],
        halvings: 0,
        kappa_max: kmax,
        kappa_min: kmin,
        bisected: false,
    });

    let run = |u: &mut GridFunction,
                   stages: &mut Vec<StageRecord>,
                   ladder: Ladder,
                   eps: f64,
                   theta: f64,
                   t: f64,
                   bisected: bool|
     -> Result<(), SolveError> {
        let sigma_t = t * sigma + (1.0 - t);
        let start = u.shifted(eps);
        let (next, trace) = newton_solve(&grid, &start, &spec_at(spec, theta), sigma_t, &opts.newton)?;
        let (kmin, kmax) = kappa_range(&grid, &next);
        stages.push(StageRecord {
            ladder,
            eps,
            theta,
            t,
            sigma_t,
            iterations: trace.iterations,
            residuals: trace.residuals,
            halvings: trace.halvings,
            kappa_max: kmax,
            kappa_min: kmin,
            bisected,
        });
        *u = next;
        Ok(())
    };

    let (_, err) = walk(0.0, &schedule.t[1..], opts.max_bisections, |_, t, b| {
        run(&mut u, &mut stages, Ladder::T, eps0, theta0, t, b)
    });
    if let Some(e) = err {
        return Err(exhausted("t", e));
    }

    let mut theta_reached = theta0;
    if thetas.len() > 1 {
        let (reached, err) = walk(theta0, &thetas[1..], opts.max_bisections, |_, th, b| {
            run(&mut u, &mut stages, Ladder::Theta, eps0, th, 1.0, b)
        });
        theta_reached = reached;
        if let Some(e) = err {
            if !recoverable(&e) {
                return Err(e);
            }
        }
    }

    let mut levels = vec![LevelSolution {
        eps: eps0,
        solution: u.clone(),
    }];
    for &eps in &schedule.eps[1..] {
        let from = u.boundary;
        let (_, err) = walk(from, &[eps], opts.max_bisections, |_, e, b| {
            run(&mut u, &mut stages, Ladder::Eps, e, theta_reached, 1.0, b)
        });
        if let Some(e) = err {
            return Err(exhausted(&format!("eps = {eps}"), e));
        }
        levels.push(LevelSolution {
            eps,
            solution: u.clone(),
        });
    }

    let final_residual = stages.last().and_then(|s| s.residuals.last().copied()).unwrap_or(f64::NAN);
    Ok(SolveReport {
        domain: domain.clone(),
        spec: spec.clone(),
        sigma,
        schedule: schedule.clone(),
        theta_reached,
        stages,
        levels,
        solution: u,
        final_residual,
    })
}

fn exhausted(stage: &str, e: SolveError) -> SolveError {
    if recoverable(&e) {
        SolveError::ScheduleExhausted {
            stage: format!("{stage} ({e})"),
        }
    } else {
        e
    }
}
