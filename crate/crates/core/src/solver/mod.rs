//! Solvers for `min f(x) + h(Ax)` over a compact embedded submanifold, via
//! the splitting `min f(x) + h(y)` subject to `Ax = y`.
//!
//! Three solvers share the trace and stopping machinery:
//!
//! - [`AradmmSolver`]: single-loop ADMM with adaptive dual step sizes and an
//!   increasing penalty; one gradient evaluation, one proximal step, and one
//!   retraction per iteration.
//! - [`MadmmSolver`]: classic manifold ADMM with a fixed penalty; the
//!   x-subproblem is approximately solved by a few Riemannian gradient steps.
//! - [`RsgSolver`]: Riemannian subgradient method on the unsplit objective
//!   (requires `A` = identity).

mod aradmm;
mod madmm;
mod rsg;

pub use aradmm::{aradmm_run, AradmmSolver, StepReport};
pub use madmm::{madmm_run, MadmmParams, MadmmSolver};
pub use rsg::{rsg_run, RsgSolver};

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{ManifoldPoint, TangentVector};
use crate::problems::ProblemInstance;

/// Adaptive schedule inputs: initial dual step `gamma0`, initial penalty
/// `rho0`, and the coefficients of the penalty growth (`c_rho`), dual step
/// decay (`c_gamma`), and primal step decay (`c_tau`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub gamma0: f64,
    pub rho0: f64,
    pub c_rho: f64,
    pub c_gamma: f64,
    pub c_tau: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            gamma0: 50.0,
            rho0: 5.0,
            c_rho: 1.0,
            c_gamma: 50.0,
            c_tau: 0.2,
        }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma0", self.gamma0),
            ("rho0", self.rho0),
            ("c_rho", self.c_rho),
            ("c_gamma", self.c_gamma),
            ("c_tau", self.c_tau),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Schedule parameters together with the frozen initial residual
/// `r0 = ||A x_0 - y_0||`, fixed at solver start.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleConfig {
    params: ScheduleParams,
    r0: f64,
}

impl ScheduleConfig {
    pub fn new(params: ScheduleParams, r0: f64) -> Result<Self> {
        params.validate()?;
        if !(r0 >= 0.0) || !r0.is_finite() {
            return Err(Error::param(format!("r0 must be nonnegative, got {r0}")));
        }
        Ok(ScheduleConfig { params, r0 })
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// Bound on the dual iterates enforced by the adaptive dual step rule:
    /// `(gamma0 pi^2 / 6) r0`.
    pub fn lambda_max(&self) -> f64 {
        self.params.gamma0 * PI * PI / 6.0 * self.r0
    }

    /// Penalty at iteration `k`: `max(rho0, c_rho k^{1/3})`. The max
    /// reconciles the configured initial penalty with the growth schedule,
    /// which vanishes at `k = 0`.
    pub fn rho_at(&self, k: usize) -> f64 {
        self.params.rho0.max(self.params.c_rho * (k as f64).cbrt())
    }

    /// Primal step size at iteration `k`: `c_tau (k+1)^{-1/3}`, shifted by
    /// one to avoid the singularity at `k = 0`.
    pub fn tau_at(&self, k: usize) -> f64 {
        self.params.c_tau / ((k + 1) as f64).cbrt()
    }

    /// Dual step size for the update following iteration `k`:
    ///
    /// `gamma_{k+1} = min(gamma0 r0 ln^2(2) / (r_{k+1} (k+1)^2 ln(k+2)),
    ///                    c_gamma / (k^{1/3} ln^2(k+1)))`
    ///
    /// with natural logarithms. The first branch caps
    /// `gamma_{k+1} r_{k+1}` so the dual increments form a summable series;
    /// it is `+inf` when `r_{k+1} = 0`. The second branch has a vanishing
    /// denominator at `k = 0` and is treated as `+inf` there. If both
    /// degenerate the current `gamma_k` is carried forward.
    pub fn gamma_update(&self, k: usize, r_next: f64, gamma_current: f64) -> f64 {
        let kf = k as f64;
        let ln2 = std::f64::consts::LN_2;
        let t1 = if r_next > 0.0 {
            self.params.gamma0 * self.r0 * ln2 * ln2
                / (r_next * (kf + 1.0) * (kf + 1.0) * (kf + 2.0).ln())
        } else {
            f64::INFINITY
        };
        let t2 = if k == 0 {
            f64::INFINITY
        } else {
            let l = (kf + 1.0).ln();
            self.params.c_gamma / (kf.cbrt() * l * l)
        };
        if t1.is_infinite() && t2.is_infinite() {
            gamma_current
        } else {
            t1.min(t2)
        }
    }
}

/// Stopping criteria; at least one must be enabled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Stop after this many iterations.
    pub max_iters: Option<usize>,
    /// Stop when `|F(x_{k+1}) - F(x_k)|` drops below this threshold.
    pub obj_change_tol: Option<f64>,
    /// Stop when the largest of the three KKT residuals (computed with the
    /// certified multiplier) drops below this threshold.
    pub kkt_tol: Option<f64>,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            max_iters: Some(500),
            obj_change_tol: Some(1e-8),
            kkt_tol: None,
        }
    }
}

impl StopRule {
    pub fn max_iterations(n: usize) -> Self {
        StopRule {
            max_iters: Some(n),
            obj_change_tol: None,
            kkt_tol: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters.is_none() && self.obj_change_tol.is_none() && self.kkt_tol.is_none() {
            return Err(Error::Misconfigured(
                "stop rule must enable at least one criterion".into(),
            ));
        }
        if let Some(n) = self.max_iters {
            if n == 0 {
                return Err(Error::Misconfigured("max_iters must be >= 1".into()));
            }
        }
        for (name, tol) in [
            ("obj_change_tol", self.obj_change_tol),
            ("kkt_tol", self.kkt_tol),
        ] {
            if let Some(t) = tol {
                if !(t > 0.0) {
                    return Err(Error::Misconfigured(format!("{name} must be > 0")));
                }
            }
        }
        Ok(())
    }
}

/// Oracle-call counters, incremented once per in-iteration evaluation.
/// Setup work (the initial gradient and the default `y_0` prox) is not
/// attributed to iterations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounters {
    pub grad_f_evals: usize,
    pub prox_calls: usize,
    pub retraction_calls: usize,
}

/// Mutable solver state after `k` completed iterations.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub x: ManifoldPoint,
    pub y: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub k: usize,
    /// Penalty used by the iteration that produced this state.
    pub rho: f64,
    /// Current dual step size `gamma_k`.
    pub gamma: f64,
    /// Primal step size used by the producing iteration.
    pub tau: f64,
    /// `||A x_k - y_k||`.
    pub residual: f64,
    pub counters: OracleCounters,
}

/// One trace row. Row `k = 0` logs the initial iterate; row `k >= 1` logs the
/// state after iteration `k`, with `rho`/`gamma`/`tau` the values used by the
/// iteration that produced it. Residuals are computed with the certified
/// multiplier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterateRecord {
    pub k: usize,
    pub objective: f64,
    pub stat_res: f64,
    pub dual_res: f64,
    pub primal_res: f64,
    pub lambda_norm: f64,
    pub rho: f64,
    pub gamma: f64,
    pub tau: f64,
    pub elapsed_seconds: f64,
}

impl IterateRecord {
    pub fn max_kkt(&self) -> f64 {
        self.stat_res.max(self.dual_res).max(self.primal_res)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.objective,
            self.stat_res,
            self.dual_res,
            self.primal_res,
            self.lambda_norm,
            self.rho,
            self.gamma,
            self.tau,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Streaming consumer of trace records.
pub trait TraceSink {
    fn record(&mut self, rec: &IterateRecord);
}

impl TraceSink for Vec<IterateRecord> {
    fn record(&mut self, rec: &IterateRecord) {
        self.push(*rec);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// All three KKT residuals fell below the configured tolerance.
    KktSatisfied,
    /// The objective change between consecutive iterations fell below the
    /// configured tolerance.
    ObjectiveStalled,
    /// The iteration budget was exhausted.
    MaxIterations,
    /// A non-finite value appeared; the last trace record is the diagnostic.
    Diverged,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub state: SolverState,
    pub trace: Vec<IterateRecord>,
    pub status: RunStatus,
}

impl RunResult {
    pub fn final_record(&self) -> &IterateRecord {
        self.trace.last().expect("trace always has the initial row")
    }

    pub fn diverged(&self) -> bool {
        self.status == RunStatus::Diverged
    }
}

/// Initial iterate. When `y0`/`lambda0` are omitted the solvers default to
/// `y0 = prox_{h/rho0}(A x0)` and `lambda0 = 0`; a proximal start keeps the
/// initial residual `r0` positive for nontrivial regularizers, which the
/// adaptive dual step rule needs to move the multiplier at all.
#[derive(Clone, Debug)]
pub struct Init {
    pub x0: ManifoldPoint,
    pub y0: Option<DMatrix<f64>>,
    pub lambda0: Option<DMatrix<f64>>,
}

impl Init {
    pub fn from_point(x0: ManifoldPoint) -> Self {
        Init {
            x0,
            y0: None,
            lambda0: None,
        }
    }
}

/// Value of the augmented Lagrangian
/// `f(x) + h(y) - <lambda, Ax - y> + (rho/2) ||Ax - y||^2`.
pub fn augmented_lagrangian(
    problem: &ProblemInstance,
    x: &ManifoldPoint,
    y: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    rho: f64,
) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::param("augmented_lagrangian requires rho > 0"));
    }
    let ax = problem.linear_map.apply(x.data())?;
    if y.shape() != ax.shape() || lambda.shape() != ax.shape() {
        return Err(Error::dims(format!(
            "augmented_lagrangian: y {:?} / lambda {:?} vs Ax {:?}",
            y.shape(),
            lambda.shape(),
            ax.shape()
        )));
    }
    let gap = &ax - y;
    Ok(problem.smooth.eval(x.data()) + problem.regularizer.eval(y)? - lambda.dot(&gap)
        + 0.5 * rho * gap.norm_squared())
}

/// Exact minimizer of the augmented Lagrangian in `y`:
/// `y = prox_{h/rho}(A x - lambda / rho)`.
pub fn y_update(
    problem: &ProblemInstance,
    x: &ManifoldPoint,
    lambda: &DMatrix<f64>,
    rho: f64,
) -> Result<DMatrix<f64>> {
    let ax = problem.linear_map.apply(x.data())?;
    y_update_from_ax(problem, &ax, lambda, rho)
}

pub(crate) fn y_update_from_ax(
    problem: &ProblemInstance,
    ax: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    rho: f64,
) -> Result<DMatrix<f64>> {
    if !(rho > 0.0) {
        return Err(Error::param("y_update requires rho > 0"));
    }
    let arg = ax - lambda.scale(1.0 / rho);
    problem.regularizer.prox(1.0 / rho, &arg)
}

/// Riemannian gradient of `x -> L_rho(x, y_next, lambda)`:
/// the tangent projection of `grad f(x) + rho A*(Ax - y_next - lambda/rho)`.
pub fn grad_phi(
    problem: &ProblemInstance,
    x: &ManifoldPoint,
    y_next: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    rho: f64,
) -> Result<TangentVector> {
    let euclid_grad = problem.smooth.euclid_grad(x.data());
    let ax = problem.linear_map.apply(x.data())?;
    grad_phi_with(problem, x, &euclid_grad, &ax, y_next, lambda, rho)
}

pub(crate) fn grad_phi_with(
    problem: &ProblemInstance,
    x: &ManifoldPoint,
    euclid_grad: &DMatrix<f64>,
    ax: &DMatrix<f64>,
    y_next: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    rho: f64,
) -> Result<TangentVector> {
    if !(rho > 0.0) {
        return Err(Error::param("grad_phi requires rho > 0"));
    }
    // rho (Ax - y - lambda/rho) = rho (Ax - y) - lambda
    let penalty = (ax - y_next).scale(rho) - lambda;
    let ambient = euclid_grad + problem.linear_map.adjoint_apply(&penalty)?;
    x.project_tangent(&ambient)
}

/// Single retracted gradient step `x_{k+1} = R_{x_k}(-tau grad)`.
pub fn x_update(x: &ManifoldPoint, grad: &TangentVector, tau: f64) -> ManifoldPoint {
    x.retract(&grad.scale(-tau))
}

/// Dual ascent step `lambda_{k+1} = lambda_k - gamma (A x_{k+1} - y_{k+1})`.
pub fn lambda_update(
    lambda: &DMatrix<f64>,
    gamma: f64,
    ax: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> DMatrix<f64> {
    lambda - (ax - y).scale(gamma)
}

/// Shared run loop: emits the initial record, steps until a stop criterion
/// fires, and reports how the run ended.
pub(crate) trait IterativeSolver {
    fn initial_record(&self) -> IterateRecord;
    fn state(&self) -> &SolverState;
    fn step_record(&mut self) -> Result<IterateRecord>;
}

pub(crate) fn drive<S: IterativeSolver>(
    solver: &mut S,
    stop: &StopRule,
    mut sink: Option<&mut dyn TraceSink>,
) -> Result<(Vec<IterateRecord>, RunStatus)> {
    stop.validate()?;
    let mut trace = Vec::new();
    let first = solver.initial_record();
    if let Some(s) = sink.as_deref_mut() {
        s.record(&first);
    }
    trace.push(first);
    if !first.is_finite() {
        return Ok((trace, RunStatus::Diverged));
    }
    let mut prev_obj = first.objective;
    let status = loop {
        if let Some(max) = stop.max_iters {
            if solver.state().k >= max {
                break RunStatus::MaxIterations;
            }
        }
        let rec = solver.step_record()?;
        if let Some(s) = sink.as_deref_mut() {
            s.record(&rec);
        }
        trace.push(rec);
        if !rec.is_finite() {
            break RunStatus::Diverged;
        }
        if let Some(tol) = stop.kkt_tol {
            if rec.max_kkt() <= tol {
                break RunStatus::KktSatisfied;
            }
        }
        if let Some(tol) = stop.obj_change_tol {
            if (rec.objective - prev_obj).abs() <= tol {
                break RunStatus::ObjectiveStalled;
            }
        }
        prev_obj = rec.objective;
    };
    Ok((trace, status))
}
