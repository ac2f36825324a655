use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function being evaluated.
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    /// No finite service time can deliver the packet(s) with this energy.
    #[error("energy {energy} is at or below the Shannon floor {floor}")]
    EnergyBelowShannonFloor { energy: f64, floor: f64 },

    /// The service times alone do not fit in the session.
    #[error("total service time {total_delay} exceeds session length {session}")]
    InfeasibleSession { total_delay: f64, session: f64 },

    /// No schedule satisfies the constraints.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An evaluator was handed a policy that violates its precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("grid search exceeded its node budget of {budget}")]
    OracleBudgetExceeded { budget: u64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
