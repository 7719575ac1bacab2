use thiserror::Error;

/// Errors produced by the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row {line} in {path}: field `{field}`: {message}")]
    MalformedRow {
        path: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("duplicate record id ({id}, {lang}) at row {line}")]
    DuplicateRecord { id: String, lang: String, line: usize },

    #[error("annotation error: {0}")]
    Annotation(String),

    #[error("sequence length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("unknown language group target `{0}` for kind {1}")]
    InvalidGroupTarget(String, String),

    #[error("missing language `{0}` when assembling group")]
    MissingLanguage(String),

    #[error("translation client failed for record `{record_id}`: {message}")]
    TranslationFailed { record_id: String, message: String },

    #[error("corrupt cache entry in {path} at line {line}: {message}")]
    CorruptCache {
        path: String,
        line: usize,
        message: String,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("remote request to {endpoint} failed after {attempts} attempts: {message}")]
    Remote {
        endpoint: String,
        attempts: u32,
        message: String,
    },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
