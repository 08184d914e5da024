//! Nonlinear drivers: Newton–Raphson with static condensation, the
//! fixed-point iteration, Reynolds continuation and backward-Euler marching.
//!
//! An iteration is one linear solve and update followed by a residual
//! evaluation at the new iterate; the loop stops once that residual is at
//! most `tol`. At least one iteration is always taken. The residual of the
//! initial state is kept apart from the history.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::{fp_assemble, set_free_values, Stabilization};
use crate::linear::{linear_solve, norm2, DEFAULT_LINEAR_TOL};
use crate::newton::{
    apply_newton_update, assemble_global, residual_norm, solve_fine_scales, State,
};
use crate::problem::Problem;

/// A residual larger than this multiple of the smallest residual seen marks
/// the iteration as diverged.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Newton,
    FixedPoint,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Newton => "newton",
            Strategy::FixedPoint => "fixed_point",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    pub re_start: f64,
    pub re_target: f64,
    #[serde(default = "default_factor")]
    pub factor: f64,
}

fn default_factor() -> f64 {
    1.1
}

impl Continuation {
    pub fn new(re_start: f64, re_target: f64) -> Self {
        Continuation {
            re_start,
            re_target,
            factor: default_factor(),
        }
    }

    /// Reynolds numbers `re_start·factorᵏ`, capped at and ending with `re_target`.
    pub fn ladder(&self) -> Vec<f64> {
        let mut out = vec![self.re_start];
        let mut re = self.re_start;
        while re < self.re_target {
            re = (re * self.factor).min(self.re_target);
            out.push(re);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub strategy: Strategy,
    /// Absolute tolerance on the residual 2-norm.
    pub tol: f64,
    pub max_iter: usize,
    pub dt: Option<f64>,
    pub n_steps: Option<usize>,
    pub continuation: Option<Continuation>,
    pub linear_tol: f64,
    /// Keep every `snapshot_stride`-th state of a time march.
    pub snapshot_stride: usize,
    /// Fixed-point only; `Off` drops the `τ` term.
    #[serde(skip)]
    pub stabilization: Stabilization,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            strategy: Strategy::Newton,
            tol: 1e-8,
            max_iter: 25,
            dt: None,
            n_steps: None,
            continuation: None,
            linear_tol: DEFAULT_LINEAR_TOL,
            snapshot_stride: 1,
            stabilization: Stabilization::Tau,
        }
    }
}

impl SolverConfig {
    pub fn newton() -> Self {
        Self::default()
    }

    pub fn fixed_point() -> Self {
        SolverConfig {
            strategy: Strategy::FixedPoint,
            ..Self::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.max_iter < 1 {
            return bad("max_iter must be at least 1");
        }
        if !(self.linear_tol > 0.0) {
            return bad("linear_tol must be positive");
        }
        if self.snapshot_stride < 1 {
            return bad("snapshot_stride must be at least 1");
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return bad("dt must be positive");
            }
        }
        if let Some(c) = &self.continuation {
            if !(c.factor > 1.0) {
                return bad("continuation factor must exceed 1");
            }
            if !(c.re_start > 0.0 && c.re_target >= c.re_start) {
                return bad("continuation needs 0 < re_start <= re_target");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub strategy: Strategy,
    pub reynolds: f64,
    /// Stopping metric of the starting state.
    pub initial_residual: Option<f64>,
    /// Stopping metric after each iteration: the Newton residual, or for the
    /// fixed-point strategy `‖K(v)x − F(v)‖` of its own linearized system.
    pub residual_history: Vec<f64>,
    /// Fixed-point only: `‖x^{k+1} − x^k‖₂` per iteration.
    pub increment_history: Vec<f64>,
    /// Fixed-point only: Newton residual after each iteration, with bubbles
    /// from an element-local solve.
    pub comparison_history: Vec<f64>,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
    /// Why the loop stopped early, if it broke down.
    pub breakdown: Option<String>,
    /// Rung or time-step reports of continuation and marching runs.
    pub steps: Vec<IterationReport>,
}

impl IterationReport {
    fn new(strategy: Strategy, reynolds: f64) -> Self {
        IterationReport {
            strategy,
            reynolds,
            initial_residual: None,
            residual_history: Vec::new(),
            increment_history: Vec::new(),
            comparison_history: Vec::new(),
            converged: false,
            diverged: false,
            iterations: 0,
            breakdown: None,
            steps: Vec::new(),
        }
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.residual_history.last().copied()
    }

    /// Records a residual and reports whether the iteration should stop.
    fn push(&mut self, r: f64, tol: f64) -> bool {
        self.residual_history.push(r);
        self.iterations = self.residual_history.len();
        if r <= tol {
            self.converged = true;
            return true;
        }
        let min = self
            .residual_history
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !r.is_finite() || r > DIVERGENCE_FACTOR * min {
            self.diverged = true;
            return true;
        }
        false
    }

    /// Breakdown after at least one update is reported as divergence; before
    /// any update it is a genuine error.
    fn breakdown(&mut self, err: Error, updated: bool) -> Result<()> {
        if !updated {
            return Err(err);
        }
        self.diverged = true;
        self.breakdown = Some(err.to_string());
        Ok(())
    }
}

/// Newton solve from the Dirichlet-lifted zero state.
pub fn newton_solve(problem: &Problem, config: &SolverConfig) -> Result<(State, IterationReport)> {
    newton_solve_from(problem, config, State::lifted(problem))
}

/// Newton solve from a supplied initial state (constraints are re-imposed).
pub fn newton_solve_from(
    problem: &Problem,
    config: &SolverConfig,
    mut state: State,
) -> Result<(State, IterationReport)> {
    config.validate()?;
    state.impose_constraints(problem);
    let mut report = IterationReport::new(Strategy::Newton, problem.reynolds());
    let mut system = assemble_global(problem, &state)?;
    report.initial_residual = Some(system.residual_norm);
    for k in 0..config.max_iter {
        let delta = match linear_solve(&system.matrix, &system.rhs, config.linear_tol) {
            Ok(d) => d,
            Err(e) => {
                report.breakdown(e, k > 0)?;
                break;
            }
        };
        apply_newton_update(problem, &system, &mut state, &delta)?;
        system = match assemble_global(problem, &state) {
            Ok(s) => s,
            Err(e) => {
                report.breakdown(e, true)?;
                break;
            }
        };
        if report.push(system.residual_norm, config.tol) {
            break;
        }
    }
    Ok((state, report))
}

/// Newton residual at `state` with its bubbles re-solved element by element.
pub fn comparison_residual(problem: &Problem, state: &State) -> Result<f64> {
    let mut s = state.clone();
    solve_fine_scales(problem, &mut s)?;
    residual_norm(problem, &s)
}

pub fn fixed_point_solve(
    problem: &Problem,
    config: &SolverConfig,
) -> Result<(State, IterationReport)> {
    fixed_point_solve_from(problem, config, State::lifted(problem))
}

pub fn fixed_point_solve_from(
    problem: &Problem,
    config: &SolverConfig,
    mut state: State,
) -> Result<(State, IterationReport)> {
    config.validate()?;
    state.impose_constraints(problem);
    state.beta.iter_mut().for_each(|b| *b = [0.0; 2]);
    let mut report = IterationReport::new(Strategy::FixedPoint, problem.reynolds());
    let mut system = fp_assemble(problem, &state, config.stabilization)?;
    report.initial_residual = Some(system.residual_norm(problem, &state));
    for k in 0..config.max_iter {
        let x = match linear_solve(&system.matrix, &system.rhs, config.linear_tol) {
            Ok(x) => x,
            Err(e) => {
                report.breakdown(e, k > 0)?;
                break;
            }
        };
        let mut next = state.clone();
        set_free_values(problem, &mut next, &x);
        let inc: Vec<f64> = problem
            .dofs
            .free_dofs()
            .iter()
            .map(|&g| next.global(problem, g) - state.global(problem, g))
            .collect();
        state = next;
        report.increment_history.push(norm2(&inc));
        report
            .comparison_history
            .push(comparison_residual(problem, &state).unwrap_or(f64::NAN));
        system = match fp_assemble(problem, &state, config.stabilization) {
            Ok(s) => s,
            Err(e) => {
                report.residual_history.push(f64::NAN);
                report.iterations = report.residual_history.len();
                report.breakdown(e, true)?;
                break;
            }
        };
        if report.push(system.residual_norm(problem, &state), config.tol) {
            break;
        }
    }
    Ok((state, report))
}

pub fn solve_from(
    problem: &Problem,
    config: &SolverConfig,
    state: State,
) -> Result<(State, IterationReport)> {
    match config.strategy {
        Strategy::Newton => newton_solve_from(problem, config, state),
        Strategy::FixedPoint => fixed_point_solve_from(problem, config, state),
    }
}

/// Steady solve: continuation if configured, otherwise a single cold start.
pub fn solve(problem: &Problem, config: &SolverConfig) -> Result<(State, IterationReport)> {
    if config.continuation.is_some() {
        continuation_solve(problem, config)
    } else {
        solve_from(problem, config, State::lifted(problem))
    }
}

/// Solves along the continuation ladder, warm-starting every rung from the
/// last converged state. Stops at the first rung that fails to converge.
pub fn continuation_solve(
    problem: &Problem,
    config: &SolverConfig,
) -> Result<(State, IterationReport)> {
    config.validate()?;
    let cont = config
        .continuation
        .ok_or_else(|| Error::InvalidArgument("continuation parameters missing".into()))?;
    let ladder = cont.ladder();
    let mut chain = IterationReport::new(config.strategy, cont.re_target);
    let mut state = State::lifted(problem);
    for re in ladder {
        let rung = problem.with_reynolds(re);
        let (next, report) = solve_from(&rung, config, state.clone())?;
        let ok = report.converged;
        chain.iterations += report.iterations;
        chain.residual_history.extend(&report.residual_history);
        chain.steps.push(report);
        if !ok {
            chain.diverged = chain.steps.last().is_some_and(|r| r.diverged);
            return Ok((next, chain));
        }
        state = next;
    }
    chain.converged = true;
    Ok((state, chain))
}

/// Backward-Euler march from `initial`. Returns the kept snapshots (the
/// initial state first) and one sub-report per step.
pub fn time_march(
    problem: &Problem,
    config: &SolverConfig,
    initial: State,
) -> Result<(Vec<State>, IterationReport)> {
    config.validate()?;
    let dt = config
        .dt
        .ok_or_else(|| Error::InvalidArgument("time marching needs dt".into()))?;
    let n_steps = config
        .n_steps
        .ok_or_else(|| Error::InvalidArgument("time marching needs n_steps".into()))?;
    let mut state = initial;
    state.previous = None;
    let mut snapshots = vec![state.clone()];
    let mut march = IterationReport::new(config.strategy, problem.reynolds());
    march.converged = true;
    for step in 1..=n_steps {
        let guess = state.clone().with_previous(state.vbar.clone(), dt);
        let (mut next, report) = solve_from(problem, config, guess)?;
        let ok = report.converged;
        march.iterations += report.iterations;
        march.residual_history.extend(&report.residual_history);
        march.steps.push(report);
        next.previous = None;
        state = next;
        if !ok {
            march.converged = false;
            march.diverged = march.steps.last().is_some_and(|r| r.diverged);
            snapshots.push(state);
            return Ok((snapshots, march));
        }
        if step % config.snapshot_stride == 0 || step == n_steps {
            snapshots.push(state.clone());
        }
    }
    Ok((snapshots, march))
}
