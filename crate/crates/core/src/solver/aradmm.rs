//! Adaptive Riemannian ADMM.
//!
//! Per iteration `k` (state `x_k, y_k, lambda_k`):
//!
//! 1. `y_{k+1} = prox_{h/rho_k}(A x_k - lambda_k / rho_k)` — the exact
//!    minimizer of the augmented Lagrangian in `y`;
//! 2. `x_{k+1} = R_{x_k}(-tau_k grad Phi_k(x_k))` — one retracted gradient
//!    step on `Phi_k(x) = L_{rho_k}(x, y_{k+1}, lambda_k)`;
//! 3. `gamma_{k+1}` from the adaptive dual step rule;
//! 4. `lambda_{k+1} = lambda_k - gamma_{k+1}(A x_{k+1} - y_{k+1})`.
//!
//! The penalty grows as `rho_k = max(rho0, c_rho k^{1/3})` and the primal
//! step decays as `tau_k = c_tau (k+1)^{-1/3}`. The dual step cap makes
//! `sum_k gamma_k ||A x_k - y_k||` summable, which keeps every `lambda_k`
//! inside the ball of radius `(gamma0 pi^2/6) r0`.
//!
//! Each iteration performs exactly one fresh gradient evaluation of `f`, one
//! proximal step, and one retraction. The gradient evaluated at the new
//! iterate for the trace record is cached and reused as the next iteration's
//! update gradient; the gradient at `x_0` (and the default proximal start for
//! `y_0`) belong to setup and are not attributed to any iteration.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::diagnostics::{bar_lambda, kkt_residuals_precomputed};
use crate::error::{Error, Result};
use crate::problems::ProblemInstance;
use crate::solver::{
    drive, grad_phi_with, lambda_update, x_update, y_update_from_ax, Init, IterateRecord,
    IterativeSolver, OracleCounters, RunResult, ScheduleConfig, ScheduleParams, SolverState,
    StopRule, TraceSink,
};

/// Outcome of a single iteration, with the internals needed by residual
/// analyses on top of the plain trace record.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub record: IterateRecord,
    /// `||grad Phi_k(x_k)||` — the Riemannian gradient norm driving the step.
    pub grad_phi_norm: f64,
    /// `||x_{k+1} - x_k||` in the ambient norm.
    pub step_norm: f64,
}

pub struct AradmmSolver<'p> {
    problem: &'p ProblemInstance,
    cfg: ScheduleConfig,
    state: SolverState,
    cached_grad: DMatrix<f64>,
    cached_ax: DMatrix<f64>,
    initial_record: IterateRecord,
    start: Instant,
}

impl<'p> AradmmSolver<'p> {
    pub fn new(problem: &'p ProblemInstance, params: ScheduleParams, init: Init) -> Result<Self> {
        params.validate()?;
        problem.validate()?;
        let Init { x0, y0, lambda0 } = init;
        if x0.manifold() != problem.manifold {
            return Err(Error::Misconfigured(
                "initial point lives on a different manifold".into(),
            ));
        }
        let out_shape = problem.linear_map.output_shape();
        let ax0 = problem.linear_map.apply(x0.data())?;
        let y0 = match y0 {
            Some(y) => {
                if y.shape() != out_shape {
                    return Err(Error::dims("y0 shape mismatch"));
                }
                y
            }
            None => problem.regularizer.prox(1.0 / params.rho0, &ax0)?,
        };
        let lambda0 = match lambda0 {
            Some(l) => {
                if l.shape() != out_shape {
                    return Err(Error::dims("lambda0 shape mismatch"));
                }
                l
            }
            None => DMatrix::zeros(out_shape.0, out_shape.1),
        };
        let r0 = (&ax0 - &y0).norm();
        let cfg = ScheduleConfig::new(params, r0)?;

        let start = Instant::now();
        let cached_grad = problem.smooth.euclid_grad(x0.data());
        let objective = problem.smooth.eval(x0.data()) + problem.regularizer.eval(&ax0)?;
        // No certified multiplier exists before the first iteration; the
        // initial row reports residuals with lambda_0 itself.
        let kkt = kkt_residuals_precomputed(problem, &x0, &cached_grad, &ax0, &y0, &lambda0)?;
        let initial_record = IterateRecord {
            k: 0,
            objective,
            stat_res: kkt.stationarity,
            dual_res: kkt.dual,
            primal_res: kkt.primal,
            lambda_norm: lambda0.norm(),
            rho: cfg.rho_at(0),
            gamma: params.gamma0,
            tau: cfg.tau_at(0),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        };
        let state = SolverState {
            x: x0,
            y: y0,
            lambda: lambda0,
            k: 0,
            rho: cfg.rho_at(0),
            gamma: params.gamma0,
            tau: cfg.tau_at(0),
            residual: r0,
            counters: OracleCounters::default(),
        };
        Ok(AradmmSolver {
            problem,
            cfg,
            state,
            cached_grad,
            cached_ax: ax0,
            initial_record,
            start,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn config(&self) -> &ScheduleConfig {
        &self.cfg
    }

    pub fn problem(&self) -> &ProblemInstance {
        self.problem
    }

    pub fn initial_record(&self) -> &IterateRecord {
        &self.initial_record
    }

    /// Euclidean gradient of `f` at the current iterate (cached).
    pub fn current_grad(&self) -> &DMatrix<f64> {
        &self.cached_grad
    }

    /// `A x_k` for the current iterate (cached).
    pub fn current_ax(&self) -> &DMatrix<f64> {
        &self.cached_ax
    }

    /// Runs one iteration and returns the trace record plus step internals.
    pub fn step(&mut self) -> Result<StepReport> {
        let k = self.state.k;
        let rho = self.cfg.rho_at(k);
        let tau = self.cfg.tau_at(k);

        let y_next = y_update_from_ax(self.problem, &self.cached_ax, &self.state.lambda, rho)?;
        self.state.counters.prox_calls += 1;

        let grad = grad_phi_with(
            self.problem,
            &self.state.x,
            &self.cached_grad,
            &self.cached_ax,
            &y_next,
            &self.state.lambda,
            rho,
        )?;
        let grad_phi_norm = grad.norm();
        let x_next = x_update(&self.state.x, &grad, tau);
        self.state.counters.retraction_calls += 1;
        let step_norm = (x_next.data() - self.state.x.data()).norm();
        debug_assert!(x_next.feasibility_residual() <= 1e-9);

        let ax_next = self.problem.linear_map.apply(x_next.data())?;
        let r_next = (&ax_next - &y_next).norm();
        let gamma_next = self.cfg.gamma_update(k, r_next, self.state.gamma);
        let lambda_next = lambda_update(&self.state.lambda, gamma_next, &ax_next, &y_next);
        let certified = bar_lambda(&self.state.lambda, rho, &ax_next, &y_next)?;

        let grad_next = self.problem.smooth.euclid_grad(x_next.data());
        self.state.counters.grad_f_evals += 1;
        let objective =
            self.problem.smooth.eval(x_next.data()) + self.problem.regularizer.eval(&ax_next)?;
        let kkt = kkt_residuals_precomputed(
            self.problem,
            &x_next,
            &grad_next,
            &ax_next,
            &y_next,
            &certified,
        )?;

        self.state.x = x_next;
        self.state.y = y_next;
        self.state.lambda = lambda_next;
        self.state.k = k + 1;
        self.state.rho = rho;
        self.state.gamma = gamma_next;
        self.state.tau = tau;
        self.state.residual = r_next;
        self.cached_ax = ax_next;
        self.cached_grad = grad_next;

        let record = IterateRecord {
            k: k + 1,
            objective,
            stat_res: kkt.stationarity,
            dual_res: kkt.dual,
            primal_res: kkt.primal,
            lambda_norm: self.state.lambda.norm(),
            rho,
            gamma: gamma_next,
            tau,
            elapsed_seconds: self.start.elapsed().as_secs_f64(),
        };
        Ok(StepReport {
            record,
            grad_phi_norm,
            step_norm,
        })
    }

    pub fn run(
        &mut self,
        stop: &StopRule,
        sink: Option<&mut dyn TraceSink>,
    ) -> Result<RunResult> {
        let (trace, status) = drive(self, stop, sink)?;
        Ok(RunResult {
            state: self.state.clone(),
            trace,
            status,
        })
    }
}

impl IterativeSolver for AradmmSolver<'_> {
    fn initial_record(&self) -> IterateRecord {
        self.initial_record
    }

    fn state(&self) -> &SolverState {
        &self.state
    }

    fn step_record(&mut self) -> Result<IterateRecord> {
        Ok(self.step()?.record)
    }
}

/// Convenience driver: builds the solver and runs it to completion.
pub fn aradmm_run(
    problem: &ProblemInstance,
    params: ScheduleParams,
    stop: &StopRule,
    init: Init,
    sink: Option<&mut dyn TraceSink>,
) -> Result<RunResult> {
    let mut solver = AradmmSolver::new(problem, params, init)?;
    solver.run(stop, sink)
}
