use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown hash provider {0:?}")]
    UnknownProvider(String),

    #[error("provider registry: {0}")]
    Registry(String),

    #[error("width mismatch: expected {expected} bytes, found {found}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("position {position} outside 1..={n}")]
    PositionOutOfRange { position: u64, n: u64 },

    #[error("chain exhausted: every element has been disclosed")]
    Exhausted,

    #[error("invalid phase: {0}")]
    Phase(String),

    #[error("policy: {0}")]
    Policy(String),

    #[error("tick {tick} is not after the last recorded tick {last}")]
    NonMonotoneTick { last: u64, tick: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
