use serde::{Deserialize, Serialize};

use super::ConsensusError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuorumRule {
    /// floor(2N/3) + 1
    #[default]
    TwoThirds,
    /// 2F + 1
    Classical,
}

impl QuorumRule {
    pub fn code(self) -> u8 {
        match self {
            QuorumRule::TwoThirds => 0,
            QuorumRule::Classical => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(QuorumRule::TwoThirds),
            1 => Some(QuorumRule::Classical),
            _ => None,
        }
    }
}

/// floor(2n/3) + 1 matching messages.
pub fn quorum_size(n: usize) -> Result<usize, ConsensusError> {
    if n < 4 {
        return Err(ConsensusError::TooFewNodes(n));
    }
    Ok(2 * n / 3 + 1)
}

/// floor((n - 1) / 3), zero for an empty cluster.
pub fn max_faults(n: usize) -> usize {
    n.saturating_sub(1) / 3
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuorumConfig {
    pub n_nodes: usize,
    pub max_faults: usize,
    pub quorum: usize,
    pub rule: QuorumRule,
}

impl QuorumConfig {
    pub fn new(n_nodes: usize, rule: QuorumRule) -> Result<Self, ConsensusError> {
        let two_thirds = quorum_size(n_nodes)?;
        let f = max_faults(n_nodes);
        let quorum = match rule {
            QuorumRule::TwoThirds => two_thirds,
            QuorumRule::Classical => 2 * f + 1,
        };
        let config = QuorumConfig { n_nodes, max_faults: f, quorum, rule };
        if !config.quorums_intersect_honestly() {
            return Err(ConsensusError::UnsafeQuorum { n: n_nodes, quorum });
        }
        Ok(config)
    }

    pub fn two_thirds(n_nodes: usize) -> Result<Self, ConsensusError> {
        QuorumConfig::new(n_nodes, QuorumRule::TwoThirds)
    }

    /// Any two quorums share more than `max_faults` members.
    pub fn quorums_intersect_honestly(&self) -> bool {
        2 * self.quorum > self.n_nodes + self.max_faults
    }

    /// Honest nodes alone can still form a quorum.
    pub fn live_with_max_faults(&self) -> bool {
        self.quorum <= self.n_nodes - self.max_faults
    }

    /// View-change join threshold: enough senders that one is honest.
    pub fn weak_quorum(&self) -> usize {
        self.max_faults + 1
    }

    pub fn primary(&self, view: u64) -> crate::keys::NodeId {
        crate::keys::NodeId((view % self.n_nodes as u64) as u32)
    }
}
