//! Message transports: a deterministic in-memory simulator and TCP.
//!
//! Both implement [`Transport`]: `send` is buffered and never blocks on the
//! receiver, `recv` names the expected sender and blocks until the next message
//! from that sender arrives. Delivery is FIFO per ordered pair.

pub mod sim;
pub mod tcp;
pub mod wire;

use thiserror::Error;

use crate::location::Location;
use crate::portable::DecodeError;

pub use sim::{sim_make, SimNet, SimRun};
pub use tcp::{tcp_make, AddressBook, TcpTransport};
pub use wire::{Envelope, MAX_FRAME};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("no route to `{0}`")]
    UnknownPeer(String),
    #[error("i/o with `{peer}`: {reason}")]
    Io { peer: String, reason: String },
    #[error("malformed frame from `{peer}`: {source}")]
    Frame { peer: String, source: DecodeError },
    #[error("expected message {expected} from `{peer}`, got {found}")]
    SequenceGap { peer: String, expected: u64, found: u64 },
    #[error("`{0}` closed its connection")]
    Closed(String),
    #[error("gave up waiting for `{0}`")]
    Timeout(String),
    #[error("run aborted by the scheduler")]
    Aborted,
}

/// One endpoint's view of the network.
pub trait Transport {
    fn local(&self) -> &Location;

    fn send(&self, to: &Location, body: Vec<u8>) -> Result<(), TransportError>;

    fn recv(&self, from: &Location) -> Result<Vec<u8>, TransportError>;
}
