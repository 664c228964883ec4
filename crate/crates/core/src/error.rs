use thiserror::Error;

/// Error type shared by every operation in the crate.
///
/// `Validation` means a parameter failed a precondition before any work was
/// done; `Infeasible` means the computation is well posed but too large for
/// the exact engines (callers typically fall back to MCMC or a smaller box).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{param}`: {constraint}")]
    Validation { param: String, constraint: String },

    /// Boundary data that no height function can extend; carries a witness
    /// pair of sites whose values violate the Lipschitz/parity condition.
    #[error("boundary data not extendable: sites {x:?} and {y:?} have values {hx} and {hy} at l1 distance {dist}")]
    NonExtendable {
        x: Vec<i64>,
        y: Vec<i64>,
        hx: i64,
        hy: i64,
        dist: i64,
    },

    /// The configuration set is empty (for operations that need at least one
    /// configuration, e.g. free-boundary partition functions).
    #[error("empty configuration set: {0}")]
    EmptyConfigurationSet(String),

    #[error("computation infeasible: {0}")]
    Infeasible(String),

    #[error("profile not admissible: {0}")]
    Inadmissible(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(param: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Validation {
            param: param.into(),
            constraint: constraint.into(),
        }
    }

    pub fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
