use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument error: {0}")]
    Argument(String),
    #[error("constraint violation: {0}")]
    Constraint(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown fractal `{name}` (catalog: {catalog})")]
    UnknownFractal { name: String, catalog: String },
    #[error("no nonnegative preimage at inverse step {step}: {reason}")]
    InfeasibleInverse { step: usize, reason: String },
    #[error("exact value at step {step} needs {bits} bits, above the {limit}-bit guard; use float mode for this depth")]
    ExactOverflow { step: usize, bits: u64, limit: u64 },
    #[error("boundary-class system unstable: {0}")]
    InstableGds(String),
    #[error("indeterminate: {0}")]
    Indeterminate(String),
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
