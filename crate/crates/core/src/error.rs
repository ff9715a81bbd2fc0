use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unknown label {label}{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    UnknownLabel { label: u32, context: Option<String> },

    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error in {source_name} at {location}: {message}")]
    Parse {
        source_name: String,
        location: ParseLocation,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("duplicate scene id `{0}` in manifest")]
    DuplicateScene(String),

    #[error("manifest entry `{id}` points to missing file {path}")]
    MissingFile { id: String, path: PathBuf },

    #[error("furniture boxes {first} and {second} overlap")]
    Overlap { first: usize, second: usize },

    #[error("no free bird's-eye-view cell to place a camera")]
    NoFreeSpace,

    #[error("scene has no wall-labeled points to look at")]
    NoWallPoints,

    #[error("camera forward axis is parallel to the vertical axis")]
    DegeneratePose,

    #[error("cannot partition axis {axis}: extent {extent} is too small for {parts} parts with perturbation {perturbation}")]
    DegeneratePartition {
        axis: usize,
        extent: f64,
        parts: usize,
        perturbation: f64,
    },

    #[error("cuboid sets have different partition shapes {source_shape:?} vs {target_shape:?}")]
    ShapeMismatch {
        source_shape: [usize; 3],
        target_shape: [usize; 3],
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("every label is ignored; nothing to supervise")]
    NoSupervision,

    #[error("training diverged at iteration {iteration}: loss {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("no class has a defined IoU")]
    NoEvaluatedClasses,

    #[error("config error: {0}")]
    Config(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

/// Where in an input a parse error occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseLocation {
    Line(usize),
    Byte(u64),
}

impl std::fmt::Display for ParseLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseLocation::Line(n) => write!(f, "line {n}"),
            ParseLocation::Byte(n) => write!(f, "byte {n}"),
        }
    }
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn unknown_label(label: impl Into<u32>) -> Self {
        Error::UnknownLabel {
            label: label.into(),
            context: None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
