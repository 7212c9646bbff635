use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("length mismatch in {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("feedback polynomial is not primitive (period {period}, expected {expected})")]
    NotPrimitive { period: usize, expected: usize },
    #[error("LDPC construction failed after {attempts} attempts")]
    CodeConstruction { attempts: usize },
    #[error("permutation is not a bijection")]
    NotAPermutation,
    #[error("moments unavailable: {0}")]
    MomentsUnavailable(&'static str),
    #[error("channel length {channel} exceeds frame length {frame}")]
    ChannelTooLong { channel: usize, frame: usize },
}
