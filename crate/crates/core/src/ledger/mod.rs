//! The EHR ledger: signed record transactions, blocks ordered by PBFT,
//! and the access state materialized from them.

mod block;
mod chain;
mod state;
mod tx;

pub use block::{merkle_root, Block, BlockHeader};
pub use chain::{Applied, BuiltBlock, Chain, ChainEntry, ChainParams};
pub use state::{AccessGrant, LedgerState, RecordEntry, UserEntry};
pub use tx::{AccessScope, Action, RecordTransaction, Registration, Role, TxDraft, UserId};

use core::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::codec::DecodeError;
use crate::pbft::ConsensusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessDenied {
    #[error("unknown user")]
    UnknownUser,
    #[error("unknown record")]
    UnknownRecord,
    #[error("role does not permit this action")]
    RoleViolation,
    #[error("no live grant covers this record")]
    NoGrant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("fields do not match the rules for {0:?}")]
    FieldRules(Action),
    #[error("empty user id")]
    EmptyUserId,
    #[error("transaction id does not match its contents")]
    IdMismatch,
    #[error("signature does not verify")]
    BadSignature,
    #[error("actor is not registered")]
    UnknownActor,
    #[error("grantee is not registered")]
    UnknownGrantee,
    #[error("user already registered")]
    DuplicateUser,
    #[error("record already stored")]
    DuplicateRecord,
    #[error("grant already live")]
    DuplicateGrant,
    #[error("transaction already committed")]
    AlreadyCommitted,
    #[error("denied: {0}")]
    Denied(AccessDenied),
}

impl From<AccessDenied> for TxError {
    fn from(d: AccessDenied) -> Self {
        TxError::Denied(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    BadGenesis,
    HeightMismatch,
    PrevHashMismatch,
    ParamsMismatch,
    WrongProposer,
    FutureView,
    EmptyBlock,
    TxRootMismatch,
    DuplicateTransaction,
    MissingCertificate,
    BadCertificate,
    Transaction(TxError),
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::BadGenesis => f.write_str("genesis block does not match the chain parameters"),
            ViolationKind::HeightMismatch => f.write_str("height out of sequence"),
            ViolationKind::PrevHashMismatch => f.write_str("prev_hash does not match the predecessor"),
            ViolationKind::ParamsMismatch => f.write_str("block bound to different chain parameters"),
            ViolationKind::WrongProposer => f.write_str("proposer is not the primary of the block's view"),
            ViolationKind::FutureView => f.write_str("block claims a view ahead of consensus"),
            ViolationKind::EmptyBlock => f.write_str("block has no transactions"),
            ViolationKind::TxRootMismatch => f.write_str("tx_root does not match the transactions"),
            ViolationKind::DuplicateTransaction => f.write_str("transaction appears twice"),
            ViolationKind::MissingCertificate => f.write_str("no commit certificate"),
            ViolationKind::BadCertificate => f.write_str("commit certificate invalid"),
            ViolationKind::Transaction(e) => write!(f, "transaction invalid: {e}"),
        }
    }
}

/// First problem found while validating a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("height {height}: {reason}")]
pub struct Violation {
    pub height: u64,
    pub reason: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("no valid transaction to propose")]
    EmptyBatch,
    #[error("block at height {height} does not extend this chain")]
    ChainMismatch { height: u64 },
    #[error("expected height {expected}, got {got}")]
    HeightGap { expected: u64, got: u64 },
    #[error(transparent)]
    Invalid(Violation),
    #[error("malformed chain export: {0}")]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Params(ConsensusError),
}

#[cfg(test)]
mod tests;
