//! Crate-wide error type.
//!
//! Errors are grouped by how a caller should react to them: configuration
//! errors are recoverable by fixing inputs, numeric errors indicate a run went
//! bad (divergence, singular systems), and I/O errors carry the offending
//! path. The CLI maps these groups onto distinct process exit codes.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A basis specification that cannot produce a well-defined basis
    /// (e.g. fewer terms than the spline degree allows).
    #[error("invalid basis: {reason}")]
    InvalidBasis { reason: String },

    /// An evaluation point fell outside the declared domain. Points are never
    /// silently clamped.
    #[error("point {index} = {value} lies outside the domain [{lo}, {hi}]")]
    OutOfDomain {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// Two array operands did not agree in shape.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    /// A configuration value (file or flag) is out of range, unknown, or
    /// inconsistent with the rest of the configuration.
    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },

    /// An operation was asked for a PDE family it does not support.
    #[error("unsupported family in {context}")]
    UnsupportedFamily { context: String },

    /// A metric whose denominator vanishes (e.g. relative error against a
    /// zero reference).
    #[error("metric undefined: {reason}")]
    UndefinedMetric { reason: String },

    /// A numeric computation produced non-finite values or failed to make
    /// progress (diverged ansatz, aborted training run).
    #[error("numeric divergence: {context}")]
    NumericDivergence { context: String },

    /// A matrix expected to be symmetric positive definite was not.
    #[error("matrix not positive definite in {context}")]
    NotPositiveDefinite { context: String },

    /// A linear system could not be solved.
    #[error("singular system in {context}")]
    Singular { context: String },

    /// A geometric construction degenerated (e.g. coincident anchor and
    /// companion points for a plane basis).
    #[error("degenerate geometry: {reason}")]
    DegenerateGeometry { reason: String },

    /// Filesystem failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file with structured content failed to parse. `line` is 1-based
    /// where line granularity makes sense (e.g. newline-delimited JSON).
    #[error("parse error in {path}{}: {reason}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        line: Option<usize>,
        reason: String,
    },

    /// Refusal to overwrite existing output without explicit consent.
    #[error("output {path} already exists (pass --force to overwrite)")]
    OutputExists { path: PathBuf },
}

impl Error {
    /// Attach a path to a raw I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code the CLI maps this error onto: 2 for configuration
    /// errors, 3 for numeric failures, 4 for I/O and parse failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidBasis { .. }
            | Error::OutOfDomain { .. }
            | Error::ShapeMismatch { .. }
            | Error::InvalidConfig { .. }
            | Error::UnsupportedFamily { .. } => 2,
            Error::UndefinedMetric { .. }
            | Error::NumericDivergence { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::Singular { .. }
            | Error::DegenerateGeometry { .. } => 3,
            Error::Io { .. } | Error::Parse { .. } | Error::OutputExists { .. } => 4,
        }
    }
}
