use alloc::string::String;

use serde::Serialize;

use crate::hash::Digest;
use crate::keys::NodeId;
use crate::ledger::AccessDenied;
use crate::simnet::{FaultBehavior, NetCounters};
use crate::store::ContentAddress;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadOutcome {
    Ok,
    WrongBytes,
    IntegrityFailure,
    NotFound,
}

/// One line of the run trace. Every report metric is a fold over these.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceKind {
    RunStart {
        nodes: usize,
        max_faults: usize,
        quorum: usize,
        timeout_us: u64,
        diameter: usize,
        mean_hops: f64,
    },
    Fault {
        node: NodeId,
        fault: FaultBehavior,
    },
    FaultCleared {
        node: NodeId,
    },
    Submit {
        tx: Digest,
        actor: String,
        action: crate::ledger::Action,
        via: NodeId,
    },
    /// First sighting of a `(seq, digest)` pre-prepare on the wire.
    Proposal {
        node: NodeId,
        view: u64,
        seq: u64,
        digest: Digest,
        txs: usize,
    },
    ViewChange {
        node: NodeId,
        view: u64,
    },
    NewView {
        node: NodeId,
        view: u64,
    },
    /// First commit of a sequence by an honest replica.
    Commit {
        seq: u64,
        view: u64,
        digest: Digest,
        node: NodeId,
        txs: usize,
        payload_bytes: usize,
        /// Reached through state transfer, so no stage timings exist.
        transferred: bool,
        pre_prepare_us: u64,
        prepare_us: u64,
        commit_us: u64,
        total_us: u64,
    },
    TxCommitted {
        tx: Digest,
        seq: u64,
        latency_us: u64,
        proposed_view: u64,
        commit_view: u64,
    },
    /// A view whose primary never put a proposal on the wire before the
    /// cluster moved past it.
    FailedView {
        view: u64,
    },
    Read {
        actor: String,
        address: ContentAddress,
        outcome: ReadOutcome,
    },
    Denied {
        actor: String,
        reason: AccessDenied,
    },
    Gossip {
        transfers: usize,
        rejected: usize,
        bytes: u64,
    },
    Availability {
        records: usize,
        mean: f64,
    },
    ChainCheck {
        node: NodeId,
        height: u64,
        valid: bool,
    },
    SafetyViolation {
        seq: u64,
        node: NodeId,
    },
    Stall {
        pending: usize,
    },
    RunEnd {
        end_us: u64,
        capacity_bytes_per_s: f64,
        nodes: usize,
        store_bytes: u64,
        network: NetCounters,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEvent {
    pub t_us: u64,
    #[serde(flatten)]
    pub kind: TraceKind,
}
