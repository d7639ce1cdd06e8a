use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine reports.
///
/// The `kind()` tag is stable and is what the command-line front end prints,
/// so scripts can branch on it without parsing the message.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch in {dim}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: spatial size {height}x{width} must be a multiple of {multiple}")]
    SpatialSize {
        op: &'static str,
        height: usize,
        width: usize,
        multiple: usize,
    },

    #[error("{op}: cannot broadcast {from:?} into {to:?}")]
    Broadcast {
        op: &'static str,
        from: [usize; 4],
        to: [usize; 4],
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar([usize; 4]),

    #[error("unknown {what} '{name}'")]
    UnknownKind { what: &'static str, name: String },

    #[error("{0}: mask selects no pixels")]
    EmptyMask(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("CFL violation: displacement of {cells:.3} cells per step exceeds 1; reduce the drift factor alpha (currently {alpha})")]
    Cfl { cells: f64, alpha: f64 },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("{path}: {reason}")]
    Format { path: String, reason: String },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("unknown configuration key '{0}'")]
    UnknownConfigKey(String),

    #[error("bad value for '{key}': {reason}")]
    ConfigValue { key: String, reason: String },

    #[error("gradient check failed in {failed} of {total} cases, worst relative error {worst:e}")]
    GradCheck { failed: usize, total: usize, worst: f64 },

    #[error("{what} grid is {}x{}, data grid is {}x{}", got[0], got[1], expected[0], expected[1])]
    GridMismatch {
        what: &'static str,
        expected: [usize; 2],
        got: [usize; 2],
    },

    #[error("{text}")]
    Usage { text: String, help: bool },

    #[error("model: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::SpatialSize { .. } => "spatial_size",
            Error::Broadcast { .. } => "broadcast",
            Error::NotScalar(_) => "not_scalar",
            Error::UnknownKind { .. } => "unknown_kind",
            Error::EmptyMask(_) => "empty_mask",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Cfl { .. } => "cfl",
            Error::Divergence { .. } => "divergence",
            Error::Format { .. } => "format",
            Error::MissingFile(_) => "missing_file",
            Error::UnknownConfigKey(_) => "bad_config_key",
            Error::ConfigValue { .. } => "bad_config_value",
            Error::GradCheck { .. } => "gradcheck_failed",
            Error::GridMismatch { .. } => "grid_mismatch",
            Error::Usage { .. } => "usage",
            Error::Model(_) => "model",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
