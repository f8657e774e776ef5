use thiserror::Error;

#[derive(Debug, Error)]
pub enum AncError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    #[error("{line}: duplicate label `{name}`")]
    DuplicateLabel { name: String, line: usize },

    #[error("{line}:{col}: unknown opcode `{name}`")]
    UnknownOpcode { name: String, line: usize, col: usize },

    #[error("{line}: {op} takes {expected} argument(s), found {found}")]
    Arity {
        op: String,
        expected: usize,
        found: usize,
        line: usize,
    },

    #[error("{line}: unresolved name `{name}` (not a declared variable or label)")]
    Unresolved { name: String, line: usize },

    #[error("{line}: duplicate variable `{name}`")]
    DuplicateVariable { name: String, line: usize },

    #[error("no statements")]
    NoStatements,

    #[error("program needs {needed} registers but the machine has {available}")]
    RegisterBudget { needed: usize, available: usize },

    #[error("program has {lines} lines but the machine can address only {max}")]
    ProgramTooLong { lines: usize, max: usize },

    #[error("value out of range: {value} is not below {modulus} ({context})")]
    ValueOutOfRange {
        value: usize,
        modulus: usize,
        context: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss in term `{term}`")]
    NonFiniteLoss { term: &'static str },

    #[error("{line}: malformed input: {msg}")]
    Format { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = AncError> = std::result::Result<T, E>;
