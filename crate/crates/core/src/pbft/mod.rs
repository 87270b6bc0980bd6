//! PBFT agreement on one proposal per sequence number, with a view change
//! that carries prepared certificates and a simple state transfer for
//! replicas that fall behind.

mod latency;
mod message;
mod quorum;
mod replica;

pub use latency::LatencyBreakdown;
pub use message::{signing_bytes, CommitCertificate, Message, MessageKind, Payload, PreparedCertificate, Proposal, ViewChangeBody};
pub use quorum::{max_faults, quorum_size, QuorumConfig, QuorumRule};
pub use replica::{Application, Committed, Output, Phase, Replica, ReplicaConfig, ReplicaStats, Status, Target};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("{0} nodes cannot tolerate any fault; at least 4 are needed")]
    TooFewNodes(usize),
    #[error("quorum {quorum} of {n} does not guarantee an honest overlap")]
    UnsafeQuorum { n: usize, quorum: usize },
    #[error("node is not the primary of view {view}")]
    NotPrimary { view: u64 },
    #[error("sequence {got} proposed but {expected} is next")]
    SequenceGap { expected: u64, got: u64 },
    #[error("a view change is in progress")]
    ViewChangeInProgress,
    #[error("sequence {0} already has a proposal in this view")]
    AlreadyProposed(u64),
    #[error("the proposal failed validation")]
    InvalidProposal,
}
