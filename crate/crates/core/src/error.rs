use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid pool: {0}")]
    InvalidPool(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSynthetic(String),

    #[error("invalid run config: {0}")]
    InvalidConfig(String),

    #[error("sample {0} does not exist")]
    UnknownSample(u64),

    #[error("sample {0} is already labeled")]
    AlreadyLabeled(u64),

    #[error("sample {0} belongs to a validation set")]
    ValidationSample(u64),

    #[error("label of sample {0} requested before it was labeled")]
    LabelAccess(u64),

    #[error("cannot train on an empty labeled set")]
    EmptyTrainingSet,

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("validation set of domain {0} is empty")]
    EmptyValidation(usize),

    #[error("at least two classes are required, got {0}")]
    TooFewClasses(usize),

    #[error("{requested} samples requested but only {available} are unlabeled")]
    InsufficientUnlabeled { requested: usize, available: usize },

    #[error("invalid allocation signal: {0}")]
    InvalidSignal(String),

    #[error("pool exhausted in round {round}: {requested} requested, {available} unlabeled")]
    PoolExhausted {
        round: usize,
        requested: usize,
        available: usize,
    },

    #[error("invalid learning curve: {0}")]
    InvalidCurve(String),

    #[error("round {0} is not present in the learning curve")]
    MissingRound(usize),

    #[error("missing record for strategy `{0}`")]
    MissingStrategy(String),

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}
