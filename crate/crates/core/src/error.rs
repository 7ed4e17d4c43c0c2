//! Error type shared by every module in the crate.

use std::fmt;
use std::path::PathBuf;

use crate::world::ModalityId;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, OmniBindError>;

/// Errors emitted by tensor math, encoders, training, datasets, and file I/O.
#[derive(Clone, Debug, PartialEq)]
pub enum OmniBindError {
    /// Two operands cannot be combined because their shapes disagree.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A vector or axis has the wrong length for the requested operation.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// Tensor construction got a buffer that disagrees with the shape.
    DataLength { expected: usize, got: usize },
    /// Softmax and the contrastive losses need a strictly positive temperature.
    InvalidTemperature { temperature: f64 },
    /// A row that must have nonzero norm was (numerically) zero.
    DegenerateRow { op: &'static str, row: usize },
    /// A row passed to a divergence was not a probability vector.
    NotADistribution { row: usize, sum: f64 },
    /// Backward was requested on a non-scalar node.
    NonScalarLoss { shape: (usize, usize) },
    /// Backward was requested on a node with no gradient-carrying ancestors.
    DetachedGraph,
    /// A class id outside the world's label set.
    UnknownClass { id: usize, num_classes: usize },
    /// A modality name that does not parse.
    UnknownModality { name: String },
    /// A student-only operation received a teacher modality (or vice versa).
    WrongRole {
        modality: ModalityId,
        expected: &'static str,
    },
    /// An input collection that must be non-empty was empty.
    EmptyInput(&'static str),
    /// A configuration field has an invalid value.
    Config { field: String, message: String },
    /// The dataset cannot satisfy a manifest request.
    InsufficientRecords {
        size: usize,
        label: usize,
        available: usize,
    },
    /// A pipeline stage was invoked before its predecessor produced this file.
    MissingArtifact { path: PathBuf, produced_by: String },
    /// Training produced a non-finite loss.
    NonFiniteLoss {
        stage: &'static str,
        step: u64,
        value: f64,
    },
    /// File I/O failure (message flattened so the error stays `Clone`).
    Io { path: PathBuf, message: String },
    /// A file exists but its contents do not parse.
    Format { path: PathBuf, message: String },
}

impl fmt::Display for OmniBindError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OmniBindError::ShapeMismatch { op, left, right } => {
                write!(
                    f,
                    "{op}: shape mismatch, left is {}x{} but right is {}x{}",
                    left.0, left.1, right.0, right.1
                )
            }
            OmniBindError::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected dimension {expected}, got {got}"),
            OmniBindError::DataLength { expected, got } => {
                write!(f, "data length mismatch: expected {expected}, got {got}")
            }
            OmniBindError::InvalidTemperature { temperature } => {
                write!(f, "temperature must be positive, got {temperature}")
            }
            OmniBindError::DegenerateRow { op, row } => {
                write!(f, "{op}: row {row} is degenerate (norm below 1e-12)")
            }
            OmniBindError::NotADistribution { row, sum } => {
                write!(
                    f,
                    "row {row} is not a probability distribution (sum {sum})"
                )
            }
            OmniBindError::NonScalarLoss { shape } => {
                write!(
                    f,
                    "backward needs a scalar loss, got a {}x{} node",
                    shape.0, shape.1
                )
            }
            OmniBindError::DetachedGraph => {
                write!(f, "backward on a detached graph: no node requires grad")
            }
            OmniBindError::UnknownClass { id, num_classes } => {
                write!(f, "class id {id} out of range (world has {num_classes})")
            }
            OmniBindError::UnknownModality { name } => {
                write!(f, "unknown modality '{name}'")
            }
            OmniBindError::WrongRole { modality, expected } => {
                write!(f, "modality {modality} is not a {expected} modality")
            }
            OmniBindError::EmptyInput(what) => write!(f, "{what} must not be empty"),
            OmniBindError::Config { field, message } => {
                write!(f, "config error at `{field}`: {message}")
            }
            OmniBindError::InsufficientRecords {
                size,
                label,
                available,
            } => write!(
                f,
                "cannot build a size-{size} combination for label {label}: only {available} modalities have records"
            ),
            OmniBindError::MissingArtifact { path, produced_by } => {
                write!(
                    f,
                    "missing artifact {}: run `{produced_by}` first",
                    path.display()
                )
            }
            OmniBindError::NonFiniteLoss { stage, step, value } => {
                write!(f, "{stage}: non-finite loss {value} at step {step}")
            }
            OmniBindError::Io { path, message } => {
                write!(f, "i/o error on {}: {message}", path.display())
            }
            OmniBindError::Format { path, message } => {
                write!(f, "malformed file {}: {message}", path.display())
            }
        }
    }
}

impl std::error::Error for OmniBindError {}

impl OmniBindError {
    pub fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        OmniBindError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
