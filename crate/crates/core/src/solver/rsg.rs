//! Riemannian subgradient method on the unsplit objective `f(x) + h(x)`.
//!
//! Applicable only when `A` is the identity. Each iteration takes
//! `x_{k+1} = R_{x_k}(-eta P_{T_x M}(grad f(x_k) + g_k))` with `g_k` the
//! `sign(0) = 0` subgradient of `h` at `x_k` and a fixed step size `eta`.
//!
//! Trace embedding: `y_k := x_k` (so the primal residual is zero) and
//! `lambda_k := -g_k`, which lies in `-dh(y_k)` exactly, so the dual residual
//! is zero and the stationarity residual is the norm of the step direction.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::manifold::TangentVector;
use crate::problems::ProblemInstance;
use crate::solver::{
    drive, x_update, Init, IterateRecord, IterativeSolver, OracleCounters, RunResult, SolverState,
    StopRule, TraceSink,
};

pub struct RsgSolver<'p> {
    problem: &'p ProblemInstance,
    eta: f64,
    state: SolverState,
    direction: TangentVector,
    initial_record: IterateRecord,
    start: Instant,
}

impl<'p> RsgSolver<'p> {
    pub fn new(problem: &'p ProblemInstance, eta: f64, init: Init) -> Result<Self> {
        if !problem.linear_map.is_identity() {
            return Err(Error::Unsupported(
                "the subgradient method applies to the unsplit objective and requires A = identity"
                    .into(),
            ));
        }
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::param("rsg eta must be nonnegative"));
        }
        problem.validate()?;
        let Init { x0, y0, lambda0 } = init;
        if y0.is_some() || lambda0.is_some() {
            return Err(Error::Misconfigured(
                "rsg has no splitting variables; supply only x0".into(),
            ));
        }
        if x0.manifold() != problem.manifold {
            return Err(Error::Misconfigured(
                "initial point lives on a different manifold".into(),
            ));
        }

        let start = Instant::now();
        let (direction, objective, subgrad_norm) = Self::direction_at(problem, &x0)?;
        let initial_record = IterateRecord {
            k: 0,
            objective,
            stat_res: direction.norm(),
            dual_res: 0.0,
            primal_res: 0.0,
            lambda_norm: subgrad_norm,
            rho: 0.0,
            gamma: 0.0,
            tau: eta,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        };
        let y = x0.data().clone();
        let lambda = nalgebra::DMatrix::zeros(y.nrows(), y.ncols());
        let state = SolverState {
            x: x0,
            y,
            lambda,
            k: 0,
            rho: 0.0,
            gamma: 0.0,
            tau: eta,
            residual: 0.0,
            counters: OracleCounters::default(),
        };
        Ok(RsgSolver {
            problem,
            eta,
            state,
            direction,
            initial_record,
        start,
        })
    }

    fn direction_at(
        problem: &ProblemInstance,
        x: &crate::manifold::ManifoldPoint,
    ) -> Result<(TangentVector, f64, f64)> {
        let grad_f = problem.smooth.euclid_grad(x.data());
        let subgrad = problem.regularizer.subgradient(x.data())?;
        let direction = x.project_tangent(&(&grad_f + &subgrad))?;
        let objective = problem.smooth.eval(x.data()) + problem.regularizer.eval(x.data())?;
        Ok((direction, objective, subgrad.norm()))
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn initial_record(&self) -> &IterateRecord {
        &self.initial_record
    }

    pub fn step(&mut self) -> Result<IterateRecord> {
        let k = self.state.k;
        let x_next = x_update(&self.state.x, &self.direction, self.eta);
        self.state.counters.retraction_calls += 1;

        let (direction, objective, subgrad_norm) = Self::direction_at(self.problem, &x_next)?;
        self.state.counters.grad_f_evals += 1;

        self.state.y = x_next.data().clone();
        self.state.x = x_next;
        self.state.k = k + 1;
        self.direction = direction;

        Ok(IterateRecord {
            k: k + 1,
            objective,
            stat_res: self.direction.norm(),
            dual_res: 0.0,
            primal_res: 0.0,
            lambda_norm: subgrad_norm,
            rho: 0.0,
            gamma: 0.0,
            tau: self.eta,
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

impl IterativeSolver for RsgSolver<'_> {
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
pub fn rsg_run(
    problem: &ProblemInstance,
    eta: f64,
    stop: &StopRule,
    init: Init,
    sink: Option<&mut dyn TraceSink>,
) -> Result<RunResult> {
    let mut solver = RsgSolver::new(problem, eta, init)?;
    solver.run(stop, sink)
}
