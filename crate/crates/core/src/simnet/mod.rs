//! Deterministic discrete-event network: a random geometric topology, a
//! latency/drop link model with a simple interference penalty, fault
//! injection and a totally ordered event queue.

mod fault;
mod link;
mod network;
mod queue;
mod topology;

pub use fault::{FaultBehavior, FaultSpec, FaultTable};
pub use link::LinkModel;
pub use network::{DropReason, NetCounters, Network, SendOutcome};
pub use queue::EventQueue;
pub use topology::{build_random_topology, Position, Topology, MAX_TOPOLOGY_ATTEMPTS};

use thiserror::Error;

use crate::keys::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("no connected layout found after {attempts} attempts")]
    CannotConnect { attempts: usize },
    #[error("topology needs at least one node")]
    NoNodes,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}
