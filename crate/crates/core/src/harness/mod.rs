//! Benchmark problems, error norms, convergence studies and output files.

pub mod norms;
pub mod output;
pub mod problems;
pub mod study;

pub use norms::{error_norms, nodal_interpolant, ErrorNorms};
pub use output::{write_outputs, OutputPaths, RunSummary};
pub use problems::{
    backward_step, body_force_cavity, lid_cavity, ExactSolution, MeshParams, ProblemName,
    ProblemSpec,
};
pub use study::{convergence_study, ConvergenceRates, ConvergenceTable};
