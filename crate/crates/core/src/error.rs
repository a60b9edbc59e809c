use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed form string `{input}`: {reason}")]
    Parse { input: String, reason: String },

    #[error("form is not primitive: {0}")]
    NotPrimitive(String),

    #[error("lattice is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("resource cap exceeded: {what} needs {required} but the cap is {cap}")]
    ResourceCap {
        what: String,
        required: u64,
        cap: u64,
    },

    #[error("reduction blocked at p = {prime}: unimodular component of {form} is isotropic")]
    ReductionBlocked { prime: u64, form: String },

    #[error("no embedding of {sub} into {lattice}")]
    NoEmbedding { sub: String, lattice: String },

    #[error("certificate rejected: {0}")]
    Certificate(String),

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
