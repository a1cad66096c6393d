use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// The variants are grouped by [`ErrorClass`], which the command-line tool
/// maps onto its exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("lex error at byte {offset}: {message}")]
    Lex { offset: usize, message: String },
    #[error("syntax error at bytes {start}..{end}: expected one of [{}], found {found}", expected.join(", "))]
    Syntax { expected: Vec<String>, found: String, start: usize, end: usize },
    #[error("analysis error: {0}")]
    Analysis(String),
    #[error("retrieval error: {0}")]
    Retrieval(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error category used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Internal,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Internal => 3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ErrorClass::Usage => "usage",
            ErrorClass::Data => "data",
            ErrorClass::Internal => "internal",
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::Lex { .. }
            | Error::Syntax { .. }
            | Error::Analysis(_)
            | Error::Retrieval(_)
            | Error::Corpus(_)
            | Error::Checkpoint(_)
            | Error::Io(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::Dimension { .. } | Error::Numeric(_) | Error::Contract(_) => ErrorClass::Internal,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
