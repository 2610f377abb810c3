use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid configuration: {field} {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("unknown cost case {0} (expected 1 or 2)")]
    UnknownCase(u32),
}

#[derive(Debug, Error, PartialEq)]
pub enum GsmError {
    #[error("negative net replenishment time: SI {si} + T {t} - S {s} < 0")]
    NegativeReplenishment { si: u32, t: u32, s: u32 },
    #[error("infeasible service times: {}", .0.join("; "))]
    Infeasible(Vec<String>),
    #[error("only serial chains are supported: {0}")]
    UnsupportedTopology(String),
    #[error("search space of {0} assignments exceeds the enumeration limit")]
    SearchTooLarge(u128),
    #[error("invalid node {name}: {reason}")]
    InvalidNode { name: String, reason: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid network: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum QError {
    #[error("empty feasible action set")]
    EmptyFeasibleSet,
}

/// Errors surfaced by the experiment harness, file formats and CLI plumbing.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Gsm(#[from] GsmError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
}

impl HarnessError {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
