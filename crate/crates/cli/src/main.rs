mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vmsflow::harness::output::vtk_string;
use vmsflow::harness::problems::build;
use vmsflow::harness::{
    body_force_cavity, convergence_study, error_norms, write_outputs, ProblemName, RunSummary,
};
use vmsflow::solver::{solve, time_march};
use vmsflow::{IterationReport, State};

use config::{Settings, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "vmsflow",
    version,
    about = "Steady and transient 2D incompressible flow benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a steady benchmark, optionally by Reynolds continuation.
    Solve(CommandArgs),
    /// Mesh-refinement study of the body-force cavity.
    Study(CommandArgs),
    /// Backward-Euler time march from the boundary-value lift.
    March(CommandArgs),
}

#[derive(clap::Args)]
struct CommandArgs {
    /// TOML file with the same keys as the long flags (underscored).
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

enum Outcome {
    Converged,
    NotConverged,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(Outcome::Converged) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<Outcome, String> {
    let (kind, args) = match command {
        Command::Solve(a) => ("solve", a),
        Command::Study(a) => ("study", a),
        Command::March(a) => ("march", a),
    };
    let file = match &args.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    let out = Settings::output_dir(&args.settings, &file, std::env::var(OUTPUT_DIR_ENV).ok());
    let settings = args.settings.over(file);
    match kind {
        "solve" => run_solve(&settings, &out),
        "study" => run_study(&settings, &out),
        _ => run_march(&settings, &out),
    }
}

fn outcome(report: &IterationReport) -> Outcome {
    if report.converged {
        Outcome::Converged
    } else {
        Outcome::NotConverged
    }
}

fn print_report(report: &IterationReport) {
    println!(
        "{} at Re = {}: {} after {} iterations, final residual {:.3e}{}",
        report.strategy,
        report.reynolds,
        if report.converged {
            "converged"
        } else if report.diverged {
            "diverged"
        } else {
            "not converged"
        },
        report.iterations,
        report.final_residual().unwrap_or(f64::NAN),
        report
            .breakdown
            .as_deref()
            .map(|b| format!(" ({b})"))
            .unwrap_or_default(),
    );
}

fn run_solve(s: &Settings, out: &Path) -> Result<Outcome, String> {
    let name = s.problem()?;
    let re = s.reynolds(name);
    let spec = build(name, s.resolution(name), re).map_err(|e| e.to_string())?;
    let cfg = s.solver_config(re)?;
    let (state, report) = solve(&spec.problem, &cfg).map_err(|e| e.to_string())?;
    finish(
        name,
        &spec.problem,
        spec.exact.as_ref(),
        &state,
        &report,
        out,
    )
}

fn run_march(s: &Settings, out: &Path) -> Result<Outcome, String> {
    let name = s.problem()?;
    let re = s.reynolds(name);
    let spec = build(name, s.resolution(name), re).map_err(|e| e.to_string())?;
    let cfg = s.solver_config(re)?;
    if cfg.dt.is_none() || cfg.n_steps.is_none() {
        return Err("march needs --dt and --n-steps".into());
    }
    if cfg.continuation.is_some() {
        return Err("continuation is not available for march".into());
    }
    let initial = State::lifted(&spec.problem);
    let (snapshots, report) =
        time_march(&spec.problem, &cfg, initial).map_err(|e| e.to_string())?;
    let dir = out.join("snapshots");
    fs::create_dir_all(&dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    for (k, snap) in snapshots.iter().enumerate() {
        let path = dir.join(format!("field_{k:04}.vtk"));
        fs::write(&path, vtk_string(&spec.problem.mesh, snap))
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    let last = snapshots.last().expect("initial snapshot");
    finish(name, &spec.problem, spec.exact.as_ref(), last, &report, out)
}

fn finish(
    name: ProblemName,
    problem: &vmsflow::Problem,
    exact: Option<&vmsflow::harness::ExactSolution>,
    state: &State,
    report: &IterationReport,
    out: &Path,
) -> Result<Outcome, String> {
    let norms = match exact {
        Some(ex) => Some(error_norms(state, Some(ex), &problem.mesh).map_err(|e| e.to_string())?),
        None => None,
    };
    let summary = RunSummary::new(name.as_str(), problem, report, norms);
    write_outputs(out, problem, state, report, &summary).map_err(|e| e.to_string())?;
    print_report(report);
    if let Some(n) = norms {
        println!(
            "errors: L2 velocity {:.4e}, H1 pressure {:.4e}, L2 pressure {:.4e}",
            n.l2_velocity, n.h1_semi_pressure, n.l2_pressure
        );
    }
    println!("outputs written to {}", out.display());
    Ok(outcome(report))
}

fn run_study(s: &Settings, out: &Path) -> Result<Outcome, String> {
    let name = match &s.problem {
        Some(_) => s.problem()?,
        None => ProblemName::BodyForceCavity,
    };
    if name != ProblemName::BodyForceCavity {
        return Err(format!(
            "study needs a problem with an exact solution; {name} has none"
        ));
    }
    let re = s.reynolds(name);
    if re != 1.0 {
        return Err(format!("the exact solution holds only at Re = 1, got {re}"));
    }
    let levels = s.levels.clone().unwrap_or_else(|| vec![8, 16, 32, 64]);
    let cfg = s.solver_config(re)?;
    let table = convergence_study(&levels, |n| body_force_cavity(n, re), &cfg)
        .map_err(|e| e.to_string())?;
    fs::create_dir_all(out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
    let csv = out.join("convergence.csv");
    fs::write(&csv, table.to_csv()).map_err(|e| format!("cannot write {}: {e}", csv.display()))?;
    let json = out.join("convergence.json");
    let text = serde_json::to_string_pretty(&table).map_err(|e| e.to_string())?;
    fs::write(&json, text).map_err(|e| format!("cannot write {}: {e}", json.display()))?;
    for row in &table.rows {
        println!(
            "h = {:.5}: L2 velocity {:.4e}, H1 pressure {:.4e}, {} iterations",
            row.h, row.norms.l2_velocity, row.norms.h1_semi_pressure, row.iterations
        );
    }
    if let Some(r) = table.rates {
        println!(
            "{} rates: L2 velocity {:.3}, H1 pressure {:.3}, L2 pressure {:.3}",
            table.strategy, r.l2_velocity, r.h1_semi_pressure, r.l2_pressure
        );
    }
    println!("outputs written to {}", out.display());
    match &table.failure {
        Some(f) => {
            eprintln!("study stopped early: {f}");
            Ok(Outcome::NotConverged)
        }
        None => Ok(Outcome::Converged),
    }
}
