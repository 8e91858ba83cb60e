use crate::analysis::ConditionVerdict;

/// Failure modes shared by every stage of the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller passed inconsistent dimensions, non-finite data or an infeasible request.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Unreadable or malformed input document.
    #[error("parse error: {0}")]
    Parse(String),

    /// A dense decomposition did not converge or produced unusable output.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The input is not a port-Hamiltonian system with nonsingular structure
    /// matrix at the working tolerances, or a pivot block lost rank.
    #[error("structure violation: {0}")]
    StructureViolation(String),

    /// A Q-free solvability condition does not hold.
    #[error("precondition failed: {}", .0.summary())]
    PreconditionFailure(Box<ConditionVerdict>),

    #[error("requested order {r} is outside the feasible range [{r_min}, {r_max}]")]
    OrderOutOfRange { r: usize, r_min: usize, r_max: usize },

    #[error("feasible order range is empty (r_min = {r_min} > r_max = {r_max})")]
    EmptyOrderRange { r_min: usize, r_max: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
