use thiserror::Error;

/// Errors raised by the chain laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument {z} lies outside the potential domain (z > {low})")]
    Domain { z: f64, low: f64 },

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("mesh rule cannot be realised: {0}")]
    RuleInfeasible(String),

    #[error("root of {what} is not bracketed on [{lo}, {hi}]")]
    RootNotBracketed { what: &'static str, lo: f64, hi: f64 },

    #[error("{what} did not converge: {detail}")]
    NonConvergence { what: &'static str, detail: String },

    #[error("starting point is outside the admissible set")]
    Inadmissible,

    #[error("oracle problem has {vars} free variables, cap is {cap}")]
    TooLarge { vars: usize, cap: usize },

    #[error("jump set is infeasible: {0}")]
    Infeasible(String),

    #[error("limit table has no entry for {0}")]
    MissingEntry(String),

    #[error("serialization failed: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
