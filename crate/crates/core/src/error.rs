use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Concept vector together with the labels it is consistent with.
pub type Offender = (Vec<u32>, Vec<Vec<u32>>);

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("undeclared variable `{0}`")]
    UndeclaredVariable(String),

    #[error("value {value} out of range for `{variable}` (cardinality {card})")]
    OutOfRange {
        variable: String,
        value: i64,
        card: u32,
    },

    #[error("joint size {size} exceeds the enumeration cap {cap}")]
    CapExceeded { size: u128, cap: u128 },

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("assignment has no value for variable `{0}`")]
    MissingVariable(String),

    #[error("knowledge is unsatisfiable")]
    Unsatisfiable,

    #[error("determinism violation: {} support vector(s) admit several labels", .0.len())]
    DeterminismViolation(Vec<Offender>),

    #[error("{} support vector(s) have no consistent label", .0.len())]
    NoConsistentLabel(Vec<Vec<u32>>),

    #[error("concept slots do not share one symbol set")]
    HeterogeneousDomains,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("no consistent label is reachable from the concept distribution")]
    NoReachableLabel,

    #[error("infinite loss: the target has zero probability")]
    InfiniteLoss,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no candidate concept vector entails the label")]
    EmptyCandidates,

    #[error("remap is not defined on support vector {0:?}")]
    PartialRemap(Vec<u32>),

    #[error("candidate space of {candidates} exceeds budget {budget}; use the SAT counter")]
    BudgetExceeded { candidates: u128, budget: u128 },

    #[error("the family does not contain the identity remap")]
    IdentityExcluded,

    #[error("count overflowed u128")]
    CountOverflow,

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
