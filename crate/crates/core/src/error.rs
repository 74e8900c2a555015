use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("missing tensor file {}", .0.display())]
    MissingTensor(PathBuf),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("non-finite value at index {index} of {}", .path.display())]
    NonFiniteValue { path: PathBuf, index: usize },
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),

    #[error("need at least 2 samples to fit a profile, got {0}")]
    TooFewSamples(usize),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("no class pairs left to query")]
    NoPairsAvailable,

    #[error("no semantic segment found in explanation")]
    NoSegmentsFound,
    #[error("surface form {0:?} maps to more than one segment")]
    DuplicateSurfaceForm(String),
    #[error("invalid rule set: {0}")]
    InvalidRules(String),
    #[error("unknown segment id {0}")]
    UnknownSegment(u32),

    #[error("need at least 2 classes, got {0}")]
    InvalidClassCount(usize),
    #[error("node {node} is not part of the current label space (arity {arity})")]
    StaleNode { node: usize, arity: usize },
    #[error("unknown class {0}")]
    UnknownClass(usize),
    #[error("label {label} out of range for arity {arity}")]
    InvalidLabel { label: usize, arity: usize },

    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("unknown ticket {0}")]
    UnknownTicket(u64),
    #[error("unknown sample {0}")]
    UnknownSample(u32),
    #[error("operation {op} not allowed in phase {phase}")]
    WrongPhase { op: &'static str, phase: String },
    #[error("tickets still pending: {0:?}")]
    PendingTickets(Vec<u64>),
    #[error("split {0} is empty")]
    EmptySplit(String),
    #[error("malformed snapshot: {0}")]
    MalformedSnapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
