//! Deterministic in-process transport for multi-party protocols.
//!
//! Each party is an `async` program holding an [`Endpoint`]. [`Network::run`]
//! polls the programs on one thread, so a fixed scheduler seed always yields
//! the same [`Transcript`]. Frames are a 4-byte LE length, a 2-byte LE tag, an
//! 8-byte LE sequence number and the payload; headers count toward byte totals.

mod net;
mod party;
pub mod tags;
mod transcript;

pub use net::{Endpoint, Message, Network, Recv, Task};
pub use party::{PartyId, Role};
pub use transcript::{Account, Filter, MessageRecord, TagAccount, Transcript};

/// Frame header size in bytes.
pub const HEADER_BYTES: usize = 14;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("deadlock: {0}")]
    Deadlock(String),
    #[error("unknown party {0}")]
    UnknownParty(PartyId),
    #[error("payload of {0} bytes exceeds the frame limit")]
    PayloadTooLarge(usize),
    #[error("message from {from}: expected {expected}, got {got}")]
    UnexpectedTag { from: PartyId, expected: String, got: String },
    #[error("{count} messages left undelivered (first: {first_tag})")]
    Undelivered { count: usize, first_tag: String },
    #[error("malformed payload: {0}")]
    Malformed(String),
}
