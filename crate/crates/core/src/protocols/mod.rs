//! The example protocols: replicated key-value stores, GMW secure computation
//! and a commitment-based lottery, plus the plain oracles they are tested
//! against.

pub mod broken;
pub mod field;
pub mod gmw;
pub mod kvs;
pub mod lottery;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("xor of an empty sequence")]
    EmptyFold,
    #[error("`{party}` has no input left")]
    InputExhausted { party: String },
    #[error("commitment failed at `{at}`: `{culprit}` opened values that do not match its commitment")]
    CommitmentFailed { at: String, culprit: String },
    #[error("{0}")]
    Invalid(String),
}
