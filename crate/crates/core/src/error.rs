use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A model specification failed validation.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// An environment label is not declared in the spec.
    #[error("unknown environment label `{0}`")]
    UnknownEnvironment(String),

    /// A realized environment sequence is shorter than an operation needs.
    #[error("environment sequence too short: need {needed} labels, have {available}; pre-generate a longer sequence")]
    HorizonExhausted { needed: usize, available: usize },

    /// An argument violates an operation precondition (e.g. `k > n`).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An experiment precondition (checked by `verify`) does not hold.
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    /// An exhaustive enumeration would exceed the outcome budget.
    #[error("enumeration too large: estimated {estimated} outcomes exceeds cap {cap}")]
    EnumerationTooLarge { estimated: u128, cap: u128 },

    /// A simulation step would push the population beyond the cap.
    #[error("population cap of {cap} exceeded during a step")]
    PopulationCapExceeded { cap: u64 },

    /// The d = 1 coupling shortcut requires stochastically monotone profiles.
    #[error("monotonicity (H ii) violated: {0}")]
    MonotonicityViolated(String),

    /// An internal identity failed beyond tolerance (indicates horizon or spec trouble).
    #[error("internal consistency check failed: {0}")]
    Inconsistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
