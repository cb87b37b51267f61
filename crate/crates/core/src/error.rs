use std::path::PathBuf;

use thiserror::Error;

use crate::model::Diagnostic;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid problem: {}", summarize(.0))]
    Validation(Vec<Diagnostic>),

    #[error("fixed-point iteration did not converge after {iterations} sweeps (last update {residual:.3e}, target {target:.3e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unsupported instance: {0}")]
    Unsupported(String),

    #[error("malformed value field: {0}")]
    FieldFormat(String),

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
