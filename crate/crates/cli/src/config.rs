//! Run settings: command-line flags layered over an optional TOML file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use vmsflow::harness::ProblemName;
use vmsflow::solver::{Continuation, SolverConfig};

/// Environment variable that overrides the output directory from the config
/// file (an explicit `--output` still wins).
pub const OUTPUT_DIR_ENV: &str = "VMSFLOW_OUTPUT_DIR";

pub const DEFAULT_OUTPUT_DIR: &str = "vmsflow-output";

/// Every flag is optional so that a config file can supply it instead.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Benchmark: body_force_cavity, lid_cavity or backward_step.
    #[arg(long)]
    pub problem: Option<String>,
    /// Reynolds number.
    #[arg(long)]
    pub re: Option<f64>,
    /// Cells per side (cavities).
    #[arg(long)]
    pub n: Option<usize>,
    /// Target edge length (backward step).
    #[arg(long)]
    pub h: Option<f64>,
    /// newton or fixed_point.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Absolute tolerance on the nonlinear residual.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Relative residual tolerance of each linear solve.
    #[arg(long)]
    pub linear_tol: Option<f64>,
    /// Starting Reynolds number of a continuation ladder ending at `--re`.
    #[arg(long)]
    pub continuation_start: Option<f64>,
    /// Ratio between consecutive ladder rungs.
    #[arg(long)]
    pub continuation_factor: Option<f64>,
    /// Time step (march).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Number of time steps (march).
    #[arg(long)]
    pub n_steps: Option<usize>,
    /// Keep every k-th time step as a field snapshot (march).
    #[arg(long)]
    pub snapshot_stride: Option<usize>,
    /// Mesh levels for a study, cells per side, e.g. 8,16,32,64.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<usize>>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    /// Fields set in `self` take precedence over `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            problem: self.problem.or(base.problem),
            re: self.re.or(base.re),
            n: self.n.or(base.n),
            h: self.h.or(base.h),
            strategy: self.strategy.or(base.strategy),
            tol: self.tol.or(base.tol),
            max_iter: self.max_iter.or(base.max_iter),
            linear_tol: self.linear_tol.or(base.linear_tol),
            continuation_start: self.continuation_start.or(base.continuation_start),
            continuation_factor: self.continuation_factor.or(base.continuation_factor),
            dt: self.dt.or(base.dt),
            n_steps: self.n_steps.or(base.n_steps),
            snapshot_stride: self.snapshot_stride.or(base.snapshot_stride),
            levels: self.levels.or(base.levels),
            output: self.output.or(base.output),
        }
    }

    pub fn problem(&self) -> Result<ProblemName, String> {
        match &self.problem {
            Some(p) => p.parse().map_err(|e: vmsflow::Error| e.to_string()),
            None => {
                Err("missing --problem (body_force_cavity, lid_cavity or backward_step)".into())
            }
        }
    }

    /// Cells per side for the cavities, edge length for the step.
    pub fn resolution(&self, name: ProblemName) -> f64 {
        match name {
            ProblemName::BodyForceCavity => self.n.unwrap_or(32) as f64,
            ProblemName::LidCavity => self.n.unwrap_or(64) as f64,
            ProblemName::BackwardStep => self.h.unwrap_or(0.1),
        }
    }

    pub fn reynolds(&self, name: ProblemName) -> f64 {
        self.re.unwrap_or(match name {
            ProblemName::BodyForceCavity => 1.0,
            ProblemName::LidCavity => 400.0,
            ProblemName::BackwardStep => 15.0,
        })
    }

    pub fn solver_config(&self, re: f64) -> Result<SolverConfig, String> {
        let mut cfg = match self.strategy.as_deref() {
            None | Some("newton") => SolverConfig::newton(),
            Some("fixed_point") => SolverConfig::fixed_point(),
            Some(s) => return Err(format!("unknown strategy '{s}' (newton or fixed_point)")),
        };
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        if let Some(m) = self.max_iter {
            cfg.max_iter = m;
        }
        if let Some(t) = self.linear_tol {
            cfg.linear_tol = t;
        }
        if let Some(s) = self.snapshot_stride {
            cfg.snapshot_stride = s;
        }
        cfg.dt = self.dt;
        cfg.n_steps = self.n_steps;
        if let Some(start) = self.continuation_start {
            let mut c = Continuation::new(start, re);
            if let Some(f) = self.continuation_factor {
                c.factor = f;
            }
            cfg.continuation = Some(c);
        } else if self.continuation_factor.is_some() {
            return Err("--continuation-factor needs --continuation-start".into());
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    /// `--output`, then the environment variable, then the config file, then
    /// the default.
    pub fn output_dir(cli: &Settings, file: &Settings, env: Option<String>) -> PathBuf {
        cli.output
            .clone()
            .or(env.filter(|s| !s.is_empty()).map(PathBuf::from))
            .or(file.output.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}
