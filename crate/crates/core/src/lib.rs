//! Optimization of composite objectives `f(x) + h(Ax)` over compact embedded
//! submanifolds (unit sphere, Stiefel).
//!
//! The crate provides:
//!
//! - [`manifold`]: tangent projection, retractions, Riemannian gradients,
//!   feasibility checks, and empirical retraction-constant estimation;
//! - [`linop`]: the linear maps `A` with adjoints and power-iteration
//!   operator-norm estimation;
//! - [`prox`]: convex regularizers with proximal operators and
//!   distance-to-subdifferential computations;
//! - [`problems`]: seeded synthetic problem instances (sparse PCA, a
//!   regularized classifier on the sphere, dual principal component pursuit)
//!   plus an on-disk instance format;
//! - [`solver`]: the adaptive Riemannian ADMM solver together with the MADMM
//!   and Riemannian subgradient baselines, all emitting per-iteration traces;
//! - [`diagnostics`]: KKT residuals, sparsity, and subspace-recovery metrics.

pub mod diagnostics;
pub mod error;
pub mod linop;
pub mod manifold;
pub mod problems;
pub mod prox;
pub mod solver;

pub use error::{Error, Result};
pub use linop::{LinearMap, OperatorNormEstimate};
pub use manifold::{Manifold, ManifoldPoint, RetractionConstants, StiefelRetraction, TangentVector};
pub use problems::{GroundTruth, ProblemFamily, ProblemInstance, SmoothTerm};
pub use prox::Regularizer;
pub use solver::{
    IterateRecord, Init, OracleCounters, RunResult, RunStatus, ScheduleConfig, ScheduleParams,
    SolverState, StopRule,
};
