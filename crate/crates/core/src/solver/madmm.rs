//! Manifold ADMM with a fixed penalty.
//!
//! Per outer iteration the x-subproblem
//! `min_{x in M} f(x) - <lambda_k, Ax - y_k> + (rho/2) ||Ax - y_k||^2`
//! is approximately solved by `inner_iters` Riemannian gradient steps with a
//! constant step size, followed by the exact proximal y-update and the dual
//! update with step size `rho`.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::diagnostics::kkt_residuals_precomputed;
use crate::error::{Error, Result};
use crate::problems::ProblemInstance;
use crate::solver::{
    drive, grad_phi_with, lambda_update, x_update, y_update_from_ax, Init, IterateRecord,
    IterativeSolver, OracleCounters, RunResult, SolverState, StopRule, TraceSink,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MadmmParams {
    /// Fixed penalty (also the dual step size).
    pub rho: f64,
    /// Riemannian gradient steps per x-subproblem.
    pub inner_iters: usize,
    /// Constant step size of the inner gradient steps.
    pub eta: f64,
}

impl Default for MadmmParams {
    fn default() -> Self {
        MadmmParams {
            rho: 100.0,
            inner_iters: 10,
            eta: 1e-3,
        }
    }
}

impl MadmmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::param("madmm rho must be positive"));
        }
        if self.inner_iters < 1 {
            return Err(Error::param("madmm inner_iters must be >= 1"));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::param("madmm eta must be positive"));
        }
        Ok(())
    }
}

pub struct MadmmSolver<'p> {
    problem: &'p ProblemInstance,
    params: MadmmParams,
    state: SolverState,
    cached_grad: DMatrix<f64>,
    cached_ax: DMatrix<f64>,
    initial_record: IterateRecord,
    start: Instant,
}

impl<'p> MadmmSolver<'p> {
    pub fn new(problem: &'p ProblemInstance, params: MadmmParams, init: Init) -> Result<Self> {
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
            None => problem.regularizer.prox(1.0 / params.rho, &ax0)?,
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

        let start = Instant::now();
        let cached_grad = problem.smooth.euclid_grad(x0.data());
        let objective = problem.smooth.eval(x0.data()) + problem.regularizer.eval(&ax0)?;
        let kkt = kkt_residuals_precomputed(problem, &x0, &cached_grad, &ax0, &y0, &lambda0)?;
        let initial_record = IterateRecord {
            k: 0,
            objective,
            stat_res: kkt.stationarity,
            dual_res: kkt.dual,
            primal_res: kkt.primal,
            lambda_norm: lambda0.norm(),
            rho: params.rho,
            gamma: params.rho,
            tau: params.eta,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        };
        let state = SolverState {
            x: x0,
            y: y0,
            lambda: lambda0,
            k: 0,
            rho: params.rho,
            gamma: params.rho,
            tau: params.eta,
            residual: r0,
            counters: OracleCounters::default(),
        };
        Ok(MadmmSolver {
            problem,
            params,
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

    pub fn params(&self) -> &MadmmParams {
        &self.params
    }

    pub fn initial_record(&self) -> &IterateRecord {
        &self.initial_record
    }

    /// Runs one outer iteration.
    pub fn step(&mut self) -> Result<IterateRecord> {
        let k = self.state.k;
        let rho = self.params.rho;

        // Approximate x-subproblem solve: inner Riemannian gradient steps on
        // x -> L_rho(x, y_k, lambda_k). The first inner step reuses the
        // cached gradient; every later step evaluates afresh.
        let mut x = self.state.x.clone();
        let mut ax = self.cached_ax.clone();
        let mut grad_f = self.cached_grad.clone();
        for inner in 0..self.params.inner_iters {
            if inner > 0 {
                grad_f = self.problem.smooth.euclid_grad(x.data());
                self.state.counters.grad_f_evals += 1;
            }
            let g = grad_phi_with(
                self.problem,
                &x,
                &grad_f,
                &ax,
                &self.state.y,
                &self.state.lambda,
                rho,
            )?;
            x = x_update(&x, &g, self.params.eta);
            self.state.counters.retraction_calls += 1;
            ax = self.problem.linear_map.apply(x.data())?;
        }

        let y_next = y_update_from_ax(self.problem, &ax, &self.state.lambda, rho)?;
        self.state.counters.prox_calls += 1;
        let lambda_next = lambda_update(&self.state.lambda, rho, &ax, &y_next);
        // The dual update uses step rho, so lambda_{k+1} coincides with the
        // certified multiplier lambda_k - rho (A x_{k+1} - y_{k+1}).
        let certified = lambda_next.clone();

        let grad_next = self.problem.smooth.euclid_grad(x.data());
        self.state.counters.grad_f_evals += 1;
        let objective = self.problem.smooth.eval(x.data()) + self.problem.regularizer.eval(&ax)?;
        let kkt =
            kkt_residuals_precomputed(self.problem, &x, &grad_next, &ax, &y_next, &certified)?;
        let r_next = kkt.primal;

        self.state.x = x;
        self.state.y = y_next;
        self.state.lambda = lambda_next;
        self.state.k = k + 1;
        self.state.residual = r_next;
        self.cached_ax = ax;
        self.cached_grad = grad_next;

        Ok(IterateRecord {
            k: k + 1,
            objective,
            stat_res: kkt.stationarity,
            dual_res: kkt.dual,
            primal_res: kkt.primal,
            lambda_norm: self.state.lambda.norm(),
            rho,
            gamma: rho,
            tau: self.params.eta,
            elapsed_seconds: self.start.elapsed().as_secs_f64(),
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

impl IterativeSolver for MadmmSolver<'_> {
    fn initial_record(&self) -> IterateRecord {
        self.initial_record
    }

    fn state(&self) -> &SolverState {
        &self.state
    }

    fn step_record(&mut self) -> Result<IterateRecord> {
        self.step()
    }
}

/// Convenience driver: builds the solver and runs it to completion.
pub fn madmm_run(
    problem: &ProblemInstance,
    params: MadmmParams,
    stop: &StopRule,
    init: Init,
    sink: Option<&mut dyn TraceSink>,
) -> Result<RunResult> {
    let mut solver = MadmmSolver::new(problem, params, init)?;
    solver.run(stop, sink)
}
