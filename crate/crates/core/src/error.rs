use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("{what} = {value} is outside the domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },
    /// A conditional quantity was requested on an event of probability zero.
    #[error("conditional value undefined: {0}")]
    UndefinedConditional(&'static str),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid noise model: {0}")]
    InvalidModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),
    #[error("refused: {0}")]
    Refused(String),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain { what, value, domain }
    }
}
