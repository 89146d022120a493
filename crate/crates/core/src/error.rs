use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("radial profile is not positive at angle {angle} (value {value})")]
    NotStarShaped { angle: f64, value: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("singular coordinate Jacobian at node {0}")]
    SingularJacobian(usize),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("non-finite matrix entry")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurvatureError {
    #[error("curvature argument {0:?} leaves the positive cone")]
    OutsideCone(Vec<f64>),
    #[error("dimension mismatch: spec has n = {spec}, argument has {arg} entries")]
    Dimension { spec: usize, arg: usize },
    #[error("invalid curvature spec `{0}`")]
    Parse(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    /// Raised by the residual when `A[u]` leaves the positive cone; the
    /// damping logic treats it as a rejected step.
    #[error("convexity lost at {} node(s)", .0.len())]
    ConvexityLoss(Vec<usize>),
    #[error("no residual decrease after {0} step halvings")]
    NoProgress(usize),
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error("Newton iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("continuation schedule exhausted at {stage}")]
    ScheduleExhausted { stage: String },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("extrapolation unstable: {0}")]
    ExtrapolationUnstable(String),
    #[error("need at least {needed} ladder levels, got {got}")]
    TooFewLevels { needed: usize, got: usize },
    #[error("hodograph map degenerate at node {0}")]
    HodographDegenerate(usize),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
}
