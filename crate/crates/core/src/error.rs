use alloc::string::String;

/// Errors raised by the simulation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
    #[error("unsupported parameters: {0}")]
    Parameter(String),
    #[error("capacity exceeded: {len} values do not fit {slots} slots")]
    Capacity { len: usize, slots: usize },
    #[error("policy violation: {0}")]
    Policy(String),
    #[error("incompatible ciphertexts: {0}")]
    Compatibility(String),
    #[error("multiplicative depth exhausted (level {0})")]
    Level(usize),
    #[error("unknown enterprise {0}")]
    Registry(usize),
    #[error("attack plan error: {0}")]
    Plan(String),
    #[error("protocol halted: {0}")]
    Protocol(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed trace: {0}")]
    Audit(String),
    #[error("chain verification failed at height {0}")]
    BrokenChain(u64),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! domain {
    ($($arg:tt)*) => { $crate::Error::Domain(alloc::format!($($arg)*)) };
}
pub(crate) use domain;
