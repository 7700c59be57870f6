use thiserror::Error;

/// Failures raised by the solver, the certifier and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid cost distribution: {0}")]
    InvalidCost(String),

    #[error("degenerate interval [{lo}, {hi}]")]
    DegenerateInterval { lo: f64, hi: f64 },

    #[error("no candidate: E[v | v > {v_l}] does not exceed r = {r}")]
    InfeasibleCandidate { v_l: f64, r: f64 },

    #[error("D(., beta = {beta}) has no upper root on [r, 1]")]
    NoUpperRoot { beta: f64 },

    #[error("no interior root: {0}")]
    NoInteriorRoot(String),

    #[error("could not bracket a root of {what}")]
    BracketFailure { what: &'static str },

    #[error("alpha = {alpha} is a boundary case this solver does not cover")]
    UnsupportedBoundary { alpha: f64 },

    #[error("invariant `{invariant}` violated: {detail}")]
    Invariant { invariant: &'static str, detail: String },

    #[error("capacity exceeded: {0}")]
    CapExceeded(String),

    #[error("linear program: {0}")]
    Lp(String),

    #[error("invalid posterior distribution: {0}")]
    InvalidPosterior(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invariant(invariant: &'static str, detail: impl Into<String>) -> Error {
    Error::Invariant {
        invariant,
        detail: detail.into(),
    }
}
