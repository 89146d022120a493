//! Solver and verification harness for locally strictly convex graphs of
//! constant curvature in hyperbolic space with prescribed asymptotic boundary.

pub mod curvature;
pub mod desitter;
pub mod domain;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod oracle;
pub mod solver;
pub mod verifier;

pub use curvature::{parse_spec, CurvatureSpec};
pub use domain::{Domain, RadialProfile, Shape};
pub use error::{CurvatureError, GeometryError, SolveError, VerifyError};
pub use grid::{build_grid, GridTopology};
pub use oracle::Cap;
pub use solver::{continuation_solve, newton_solve, residual, ContinuationOptions, GridFunction, NewtonOptions, Schedule, SolveReport};
pub use verifier::{verify, ScoreEntry, Scorecard};
