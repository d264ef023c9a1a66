use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("synthetic dataset too large: {n} points exceeds cap {cap}")]
    SpecTooLarge { n: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("perplexity {ppx} too large: neighborhood 3*ppx exceeds n-1 = {max}")]
    PerplexityTooLarge { ppx: f64, max: usize },

    #[error("bandwidth search did not converge for point {point} after {iters} iterations")]
    NoConvergence { point: usize, iters: usize },

    #[error("no real Lambert-W solution: argument {arg} < -1/e")]
    NoRealSolution { arg: f64 },

    #[error("probability vector not normalized (sum = {0})")]
    NotNormalized(f64),

    #[error("support violation: q = 0 where p = {p} at index {index}")]
    SupportViolation { index: usize, p: f64 },

    #[error("neighborhood size {k} outside [1, {max}]")]
    KTooLarge { k: usize, max: usize },

    #[error("incomplete epoch: partial solution for thread {0} is missing")]
    IncompleteEpoch(usize),

    #[error("non-finite embedding in thread {thread} at iteration {iter} (point {point})")]
    NonFiniteEmbedding { thread: usize, iter: usize, point: usize },

    #[error("worker {thread} failed: {msg}")]
    WorkerFailure { thread: usize, msg: String },

    #[error("index cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical pipeline as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::NonFiniteEmbedding { .. }
                | Error::WorkerFailure { .. }
                | Error::IncompleteEpoch(_)
        )
    }
}
