use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::keys::NodeId;
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultBehavior {
    /// Sends nothing.
    Silent,
    /// Signs conflicting proposals and votes.
    Equivocate,
    /// Serves bit-flipped objects from its store.
    CorruptStorage,
    /// Stops permanently at the fault's start time.
    Crash,
    /// Cuts the listed nodes off from everyone else while active.
    Partition { group: Vec<NodeId> },
    /// Adds a fixed delay to every outbound message.
    Delayed { extra_ms: f64 },
}

impl FaultBehavior {
    pub fn is_byzantine(&self) -> bool {
        matches!(self, FaultBehavior::Silent | FaultBehavior::Equivocate | FaultBehavior::CorruptStorage | FaultBehavior::Delayed { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub node: NodeId,
    #[serde(flatten)]
    pub behavior: FaultBehavior,
    #[serde(default)]
    pub at_ms: f64,
    #[serde(default)]
    pub until_ms: Option<f64>,
}

impl FaultSpec {
    pub fn start(&self) -> SimTime {
        SimTime(SimDuration::from_millis_f64(self.at_ms).micros())
    }

    pub fn end(&self) -> Option<SimTime> {
        self.until_ms.map(|ms| SimTime(SimDuration::from_millis_f64(ms).micros()))
    }

    pub fn active_at(&self, now: SimTime) -> bool {
        now >= self.start() && self.end().map_or(true, |end| now < end)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultTable {
    n_nodes: usize,
    specs: Vec<FaultSpec>,
}

impl FaultTable {
    pub fn new(n_nodes: usize) -> Self {
        FaultTable { n_nodes, specs: Vec::new() }
    }

    pub fn from_specs(n_nodes: usize, specs: Vec<FaultSpec>) -> Result<Self, SimError> {
        let mut table = FaultTable::new(n_nodes);
        for spec in specs {
            table.push(spec)?;
        }
        Ok(table)
    }

    pub fn push(&mut self, spec: FaultSpec) -> Result<(), SimError> {
        if spec.node.index() >= self.n_nodes {
            return Err(SimError::UnknownNode(spec.node));
        }
        if let FaultBehavior::Partition { group } = &spec.behavior {
            if let Some(bad) = group.iter().find(|n| n.index() >= self.n_nodes) {
                return Err(SimError::UnknownNode(*bad));
            }
        }
        self.specs.push(spec);
        Ok(())
    }

    pub fn inject_fault(&mut self, node: NodeId, behavior: FaultBehavior, at_ms: f64, until_ms: Option<f64>) -> Result<(), SimError> {
        self.push(FaultSpec { node, behavior, at_ms, until_ms })
    }

    pub fn specs(&self) -> &[FaultSpec] {
        &self.specs
    }

    pub fn active(&self, node: NodeId, now: SimTime) -> impl Iterator<Item = &FaultBehavior> {
        self.specs.iter().filter(move |s| s.node == node && s.active_at(now)).map(|s| &s.behavior)
    }

    pub fn is_silent(&self, node: NodeId, now: SimTime) -> bool {
        self.active(node, now).any(|b| *b == FaultBehavior::Silent)
    }

    pub fn equivocates(&self, node: NodeId, now: SimTime) -> bool {
        self.active(node, now).any(|b| *b == FaultBehavior::Equivocate)
    }

    pub fn corrupts_storage(&self, node: NodeId) -> bool {
        self.specs.iter().any(|s| s.node == node && s.behavior == FaultBehavior::CorruptStorage)
    }

    pub fn extra_delay(&self, node: NodeId, now: SimTime) -> SimDuration {
        self.active(node, now)
            .map(|b| match b {
                FaultBehavior::Delayed { extra_ms } => SimDuration::from_millis_f64(*extra_ms),
                _ => SimDuration::ZERO,
            })
            .fold(SimDuration::ZERO, |a, b| a + b)
    }

    /// `(node, time)` for every crash fault.
    pub fn crashes(&self) -> Vec<(NodeId, SimTime)> {
        self.specs.iter().filter(|s| s.behavior == FaultBehavior::Crash).map(|s| (s.node, s.start())).collect()
    }

    /// Partition faults as `(start, end, group)`.
    pub fn partitions(&self) -> Vec<(SimTime, Option<SimTime>, &[NodeId])> {
        self.specs
            .iter()
            .filter_map(|s| match &s.behavior {
                FaultBehavior::Partition { group } => Some((s.start(), s.end(), group.as_slice())),
                _ => None,
            })
            .collect()
    }

    pub fn byzantine_nodes(&self) -> BTreeSet<NodeId> {
        self.specs.iter().filter(|s| s.behavior.is_byzantine()).map(|s| s.node).collect()
    }

    pub fn crashed_nodes(&self) -> BTreeSet<NodeId> {
        self.crashes().into_iter().map(|(n, _)| n).collect()
    }

    /// Nodes with any byzantine or crash fault.
    pub fn faulty_nodes(&self) -> BTreeSet<NodeId> {
        let mut all = self.byzantine_nodes();
        all.extend(self.crashed_nodes());
        all
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_and_lookup() {
        let mut t = FaultTable::new(4);
        t.inject_fault(NodeId(1), FaultBehavior::Silent, 100.0, Some(200.0)).unwrap();
        t.inject_fault(NodeId(2), FaultBehavior::Crash, 50.0, None).unwrap();
        assert!(!t.is_silent(NodeId(1), SimTime::from_millis(99)));
        assert!(t.is_silent(NodeId(1), SimTime::from_millis(100)));
        assert!(!t.is_silent(NodeId(1), SimTime::from_millis(200)));
        assert_eq!(t.crashes(), [(NodeId(2), SimTime::from_millis(50))]);
        assert_eq!(t.faulty_nodes().len(), 2);
        assert_eq!(t.inject_fault(NodeId(4), FaultBehavior::Silent, 0.0, None), Err(SimError::UnknownNode(NodeId(4))));
    }
}
