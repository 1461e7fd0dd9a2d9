use crate::fixed_point::FixedPointReport;
use crate::training::TrainReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Arguments violate an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} did not converge after {iterations} iterations (last estimate {last_estimate:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        last_estimate: f64,
    },

    #[error("fixed-point iteration did not converge after {} iterations", .0.iterations_run)]
    FixedPointNotConverged(Box<FixedPointReport>),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("decay exponent undefined: {0}")]
    UndefinedExponent(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged {
        epoch: usize,
        report: Box<TrainReport>,
    },

    #[error("nondeterministic result: {0}")]
    Nondeterminism(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad arguments).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::FixedPointNotConverged(_)
                | Error::UndefinedExponent(_)
                | Error::ResourceLimit(_)
                | Error::TrainingDiverged { .. }
                | Error::Nondeterminism(_)
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
