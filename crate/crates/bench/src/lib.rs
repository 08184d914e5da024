//! Fixtures shared by the criterion benchmarks in `benches/`.

use vmsflow::harness::{body_force_cavity, lid_cavity};
use vmsflow::solver::{solve, SolverConfig};
use vmsflow::{Problem, State};

/// Lid-driven cavity at Re = 400 on an `n × n` mesh.
pub fn lid_problem(n: usize) -> Problem {
    lid_cavity(n, 400.0).expect("valid mesh size").problem
}

/// Body-force cavity at unit viscosity on an `n × n` mesh.
pub fn body_force_problem(n: usize) -> Problem {
    body_force_cavity(n, 1.0).expect("valid mesh size").problem
}

/// A representative mid-solve state: two Newton iterations from the lift.
pub fn partially_converged(problem: &Problem) -> State {
    let cfg = SolverConfig::newton().with_max_iter(2);
    solve(problem, &cfg).expect("two iterations").0
}
