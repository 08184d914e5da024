//! Field, profile, history and summary files for external plotting.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::norms::{sample, ErrorNorms};
use crate::mesh::Mesh;
use crate::newton::State;
use crate::problem::Problem;
use crate::solver::{IterationReport, Strategy};

/// Samples per centerline profile.
pub const PROFILE_POINTS: usize = 101;

pub const FIELD_FILE: &str = "field.vtk";
pub const MESH_FILE: &str = "mesh.txt";
pub const CENTERLINE_U_FILE: &str = "centerline_u.csv";
pub const CENTERLINE_P_FILE: &str = "centerline_p.csv";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub strategy: Strategy,
    pub reynolds: f64,
    pub nu: f64,
    pub nodes: usize,
    pub elements: usize,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
    pub final_residual: Option<f64>,
    pub breakdown: Option<String>,
    /// Continuation rungs or time steps.
    pub steps: usize,
    pub norms: Option<ErrorNorms>,
}

impl RunSummary {
    pub fn new(
        name: &str,
        problem: &Problem,
        report: &IterationReport,
        norms: Option<ErrorNorms>,
    ) -> Self {
        RunSummary {
            problem: name.to_string(),
            strategy: report.strategy,
            reynolds: problem.reynolds(),
            nu: problem.nu,
            nodes: problem.mesh.n_nodes(),
            elements: problem.mesh.n_elements(),
            iterations: report.iterations,
            converged: report.converged,
            diverged: report.diverged,
            final_residual: report.final_residual(),
            breakdown: report
                .breakdown
                .clone()
                .or_else(|| report.steps.iter().rev().find_map(|s| s.breakdown.clone())),
            steps: report.steps.len(),
            norms,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub field: PathBuf,
    pub mesh: PathBuf,
    pub centerline_u: PathBuf,
    pub centerline_p: PathBuf,
    pub residuals: PathBuf,
    pub summary: PathBuf,
}

/// Legacy-ASCII unstructured grid with point data `velocity` and `pressure`.
pub fn vtk_string(mesh: &Mesh, state: &State) -> String {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nvmsflow solution\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.n_nodes());
    for x in mesh.nodes() {
        let _ = writeln!(s, "{} {} 0", x[0], x[1]);
    }
    let _ = writeln!(s, "CELLS {} {}", mesh.n_elements(), 4 * mesh.n_elements());
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.n_elements());
    for _ in mesh.triangles() {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.n_nodes());
    s.push_str("VECTORS velocity double\n");
    for v in &state.vbar {
        let _ = writeln!(s, "{} {} 0", v[0], v[1]);
    }
    s.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
    for p in &state.p {
        let _ = writeln!(s, "{p}");
    }
    s
}

/// Velocity along the vertical midline and pressure along the horizontal
/// midline of the mesh bounding box. Points outside the mesh are skipped.
pub fn centerline_profiles(mesh: &Mesh, state: &State) -> (Vec<[f64; 3]>, Vec<[f64; 2]>) {
    let (lo, hi) = mesh.bounding_box();
    let xm = 0.5 * (lo[0] + hi[0]);
    let ym = 0.5 * (lo[1] + hi[1]);
    let t = |k: usize, a: f64, b: f64| a + (b - a) * k as f64 / (PROFILE_POINTS - 1) as f64;
    let u = (0..PROFILE_POINTS)
        .filter_map(|k| {
            let y = t(k, lo[1], hi[1]);
            sample(mesh, state, [xm, y]).map(|(v, _)| [y, v[0], v[1]])
        })
        .collect();
    let p = (0..PROFILE_POINTS)
        .filter_map(|k| {
            let x = t(k, lo[0], hi[0]);
            sample(mesh, state, [x, ym]).map(|(_, p)| [x, p])
        })
        .collect();
    (u, p)
}

/// One row per evaluated iterate; fixed-point columns are empty for Newton.
pub fn residual_csv(report: &IterationReport) -> String {
    let mut out = String::from("iteration,residual,increment,comparison_residual\n");
    let (incs, cmps) = flatten_fp_histories(report);
    for (k, r) in report.residual_history.iter().enumerate() {
        let opt = |v: Option<&f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:e},{},{}",
            k + 1,
            r,
            opt(incs.get(k).and_then(|v| v.as_ref())),
            opt(cmps.get(k).and_then(|v| v.as_ref()))
        );
    }
    out
}

/// Per-row increment and comparison values aligned with the residual rows,
/// including those of sub-reports.
fn flatten_fp_histories(report: &IterationReport) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let leaf = |r: &IterationReport| {
        let inc = (0..r.residual_history.len()).map(|k| r.increment_history.get(k).copied());
        let cmp = (0..r.residual_history.len()).map(|k| r.comparison_history.get(k).copied());
        (inc.collect::<Vec<_>>(), cmp.collect::<Vec<_>>())
    };
    if report.steps.is_empty() {
        return leaf(report);
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for s in &report.steps {
        let (x, y) = leaf(s);
        a.extend(x);
        b.extend(y);
    }
    (a, b)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes all output files into `dir`, creating it if needed.
pub fn write_outputs(
    dir: &Path,
    problem: &Problem,
    state: &State,
    report: &IterationReport,
    summary: &RunSummary,
) -> Result<OutputPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = OutputPaths {
        field: dir.join(FIELD_FILE),
        mesh: dir.join(MESH_FILE),
        centerline_u: dir.join(CENTERLINE_U_FILE),
        centerline_p: dir.join(CENTERLINE_P_FILE),
        residuals: dir.join(RESIDUALS_FILE),
        summary: dir.join(SUMMARY_FILE),
    };
    let mesh = &problem.mesh;
    write(&paths.field, &vtk_string(mesh, state))?;
    write(&paths.mesh, &mesh.to_text())?;
    let (u, p) = centerline_profiles(mesh, state);
    let mut cu = String::from("y,u_x,u_y\n");
    for r in &u {
        let _ = writeln!(cu, "{},{},{}", r[0], r[1], r[2]);
    }
    write(&paths.centerline_u, &cu)?;
    let mut cp = String::from("x,p\n");
    for r in &p {
        let _ = writeln!(cp, "{},{}", r[0], r[1]);
    }
    write(&paths.centerline_p, &cp)?;
    write(&paths.residuals, &residual_csv(report))?;
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Parse(format!("summary serialization failed: {e}")))?;
    write(&paths.summary, &json)?;
    Ok(paths)
}
