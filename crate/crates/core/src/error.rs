use thiserror::Error;

/// Errors raised by the numerical, scheduling and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "quadrature did not converge: estimate {estimate:e}, error {error:e} \
         (tolerance {tolerance:e}) after {subdivisions} subdivisions"
    )]
    NonConvergence {
        estimate: f64,
        error: f64,
        tolerance: f64,
        subdivisions: usize,
    },

    #[error("integrand returned non-finite value {value} at x = {x}")]
    NonFinite { x: f64, value: f64 },

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("co-scheduled channels are parallel; zero-forcing is rank deficient")]
    RankDeficient,

    #[error("{users} users exceeds the combinatorial evaluation limit of {limit}")]
    UserLimit { users: usize, limit: usize },

    #[error("only {got} multi-user samples collected, at least {need} required")]
    InsufficientSamples { got: u64, need: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::UserLimit { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
