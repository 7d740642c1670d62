//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A quantity that must divide another does not.
    #[error("{dividend} ({dividend_name}) is not divisible by {divisor} ({divisor_name})")]
    NotDivisible {
        dividend_name: &'static str,
        dividend: u64,
        divisor_name: &'static str,
        divisor: u64,
    },

    /// A configuration failed validation; every violated invariant is listed.
    #[error("invalid configuration: {}", violations.join("; "))]
    InvalidConfig { violations: Vec<String> },

    /// A kernel graph contains a dependency cycle.
    #[error("kernel dependency cycle detected involving kernel {kernel_id}")]
    CyclicDag { kernel_id: usize },

    /// A kernel reached the reconstructor with a malformed duration.
    #[error("kernel {kernel_id} has a non-finite or negative duration")]
    BadDuration { kernel_id: usize },

    /// A numeric parameter is outside its valid range.
    #[error("{name} = {value} is out of range: {requirement}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },

    /// The search space contained no feasible configuration.
    #[error("no feasible configuration; binding constraints: {}", constraints.join("; "))]
    NoFeasibleConfig { constraints: Vec<String> },

    #[error("malformed input document: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
