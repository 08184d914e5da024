use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate element {element}: det J = {det_j:e}")]
    DegenerateElement { element: usize, det_j: f64 },

    #[error("fine-scale block singular on element {element}: |det Kff| = {det:e}")]
    FineScaleSingular { element: usize, det: f64 },

    #[error(
        "stabilization tensor singular on element {element}: |det A| = {det:e}, local Reynolds ~ {local_reynolds:.3e}"
    )]
    TauSingular {
        element: usize,
        det: f64,
        local_reynolds: f64,
    },

    #[error("linear solve failed: {reason} (residual {residual:e}, rhs norm {rhs_norm:e})")]
    LinearSolve {
        reason: String,
        residual: f64,
        rhs_norm: f64,
    },

    #[error("condensation data is stale: the state changed after the tangent was assembled")]
    StaleCondensation,

    #[error("internal dimension mismatch: {0}")]
    Dimension(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
