//! Mesh-refinement studies with least-squares rate fits.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::norms::{error_norms, ErrorNorms};
use crate::harness::problems::ProblemSpec;
use crate::solver::{solve, SolverConfig, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub norms: ErrorNorms,
    pub iterations: usize,
}

/// Fitted slopes of `log(error)` against `log(h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRates {
    pub l2_velocity: f64,
    pub h1_semi_pressure: f64,
    pub l2_pressure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub strategy: Strategy,
    pub rows: Vec<ConvergenceRow>,
    /// `None` when fewer than two levels completed.
    pub rates: Option<ConvergenceRates>,
    /// Set when a level failed to converge; `rows` then holds the levels
    /// completed before it.
    pub failure: Option<String>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,l2_velocity,h1_semi_pressure,l2_pressure,iterations\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{}",
                r.h,
                r.norms.l2_velocity,
                r.norms.h1_semi_pressure,
                r.norms.l2_pressure,
                r.iterations
            );
        }
        out
    }

    /// Rates refitted without the coarsest level.
    pub fn rates_without_coarsest(&self) -> Option<ConvergenceRates> {
        fit_rates(self.rows.get(1..)?)
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn fit_rates(rows: &[ConvergenceRow]) -> Option<ConvergenceRates> {
    if rows.len() < 2 {
        return None;
    }
    let lh: Vec<f64> = rows.iter().map(|r| r.h.ln()).collect();
    let slope = |f: fn(&ErrorNorms) -> f64| {
        let le: Vec<f64> = rows.iter().map(|r| f(&r.norms).ln()).collect();
        least_squares_slope(&lh, &le)
    };
    Some(ConvergenceRates {
        l2_velocity: slope(|n| n.l2_velocity),
        h1_semi_pressure: slope(|n| n.h1_semi_pressure),
        l2_pressure: slope(|n| n.l2_pressure),
    })
}

/// Solves every level built by `family`, tabulates the errors and fits rates.
/// Levels must have strictly decreasing `h`.
pub fn convergence_study<F>(
    levels: &[usize],
    family: F,
    config: &SolverConfig,
) -> Result<ConvergenceTable>
where
    F: Fn(usize) -> Result<ProblemSpec>,
{
    if levels.len() < 3 {
        return Err(Error::InvalidArgument(
            "a convergence study needs at least 3 levels".into(),
        ));
    }
    let specs: Vec<ProblemSpec> = levels.iter().map(|&l| family(l)).collect::<Result<_>>()?;
    if specs
        .windows(2)
        .any(|w| w[1].mesh_params.h() >= w[0].mesh_params.h())
    {
        return Err(Error::InvalidArgument(
            "mesh sizes must strictly decrease".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut failure = None;
    for spec in &specs {
        let exact = spec.exact.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{} has no exact solution at this viscosity",
                spec.name
            ))
        })?;
        let (state, report) = solve(&spec.problem, config)?;
        if !report.converged {
            failure = Some(format!(
                "level h = {} did not converge after {} iterations",
                spec.mesh_params.h(),
                report.iterations
            ));
            break;
        }
        rows.push(ConvergenceRow {
            h: spec.mesh_params.h(),
            norms: error_norms(&state, Some(exact), &spec.problem.mesh)?,
            iterations: report.iterations,
        });
    }
    Ok(ConvergenceTable {
        strategy: config.strategy,
        rates: fit_rates(&rows),
        rows,
        failure,
    })
}
