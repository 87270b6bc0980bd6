use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::crypto::KdfCost;
use crate::pbft::{max_faults, QuorumRule};
use crate::simnet::{FaultBehavior, FaultSpec, LinkModel, Topology};
use crate::store::StoreConfig;
use crate::time::SimDuration;

/// Per-hop link parameters, in milliseconds for readability in scenario
/// files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub base_latency_ms: f64,
    pub jitter_ms: f64,
    pub drop_probability: f64,
    pub interference_threshold: usize,
    pub interference_penalty_ms: f64,
    pub interference_window_ms: f64,
    pub max_attempts: u32,
    pub retransmit_timeout_ms: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            base_latency_ms: 10.0,
            jitter_ms: 5.0,
            drop_probability: 0.01,
            interference_threshold: 4,
            interference_penalty_ms: 2.0,
            interference_window_ms: 10.0,
            max_attempts: 8,
            retransmit_timeout_ms: 30.0,
        }
    }
}

impl LinkConfig {
    pub fn model(&self) -> LinkModel {
        LinkModel {
            base_latency: SimDuration::from_millis_f64(self.base_latency_ms),
            jitter: SimDuration::from_millis_f64(self.jitter_ms),
            drop_probability: self.drop_probability,
            interference_threshold: self.interference_threshold,
            interference_penalty: SimDuration::from_millis_f64(self.interference_penalty_ms),
            interference_window: SimDuration::from_millis_f64(self.interference_window_ms),
            max_attempts: self.max_attempts,
            retransmit_timeout: SimDuration::from_millis_f64(self.retransmit_timeout_ms),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeRange {
    pub min_bytes: usize,
    pub max_bytes: usize,
}

/// Weights of the non-store operations, relative to one record store.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpMix {
    pub grant: f64,
    pub revoke: f64,
    pub read: f64,
    /// Reads by a doctor without a grant, expected to be denied.
    pub denied_probe: f64,
}

impl Default for OpMix {
    fn default() -> Self {
        OpMix { grant: 0.4, revoke: 0.1, read: 1.0, denied_probe: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub patients: usize,
    pub doctors: usize,
    pub records_per_minute: f64,
    /// Record sizes are drawn uniformly from this range.
    pub record_size: SizeRange,
    pub mix: OpMix,
    /// Users register one after another, this far apart.
    pub register_spacing_ms: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            patients: 8,
            doctors: 4,
            records_per_minute: 30.0,
            record_size: SizeRange { min_bytes: 1024, max_bytes: 16 * 1024 },
            mix: OpMix::default(),
            register_spacing_ms: 50.0,
        }
    }
}

impl WorkloadConfig {
    /// Only user registrations, no record traffic.
    pub fn registrations_only(patients: usize, doctors: usize) -> Self {
        WorkloadConfig { patients, doctors, records_per_minute: 0.0, ..WorkloadConfig::default() }
    }

    pub fn ops_per_minute(&self) -> f64 {
        let m = &self.mix;
        self.records_per_minute * (1.0 + m.grant + m.revoke + m.read + m.denied_probe)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub nodes: usize,
    pub arena_m: f64,
    pub transmission_range_m: f64,
    pub interference_range_m: f64,
    pub link: LinkConfig,
    /// Radio capacity of one node, the bandwidth-utilization denominator.
    pub link_capacity_kbps: f64,
    pub quorum_rule: QuorumRule,
    /// View-change timeout. Defaults to ten times the worst-case path
    /// latency, `base_latency × diameter`, of the generated topology.
    pub timeout_ms: Option<f64>,
    pub max_backoff_doublings: u32,
    pub store: StoreConfig,
    pub gossip_interval_ms: f64,
    pub workload: WorkloadConfig,
    pub faults: Vec<FaultSpec>,
    /// Length of the workload phase, in simulated seconds.
    pub duration_s: f64,
    /// Extra simulated time after the workload stops, for stragglers.
    pub drain_s: f64,
    /// Pending work with no commit for this long is reported as a stall.
    pub stall_horizon_s: f64,
    pub sample_interval_s: f64,
    pub max_block_txs: usize,
    /// KDF cost for sealing records and hashing passwords.
    pub kdf: KdfCost,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: String::from("default"),
            seed: 1,
            nodes: 15,
            arena_m: 100.0,
            transmission_range_m: 50.0,
            interference_range_m: 60.0,
            link: LinkConfig::default(),
            link_capacity_kbps: 1000.0,
            quorum_rule: QuorumRule::TwoThirds,
            timeout_ms: None,
            max_backoff_doublings: 5,
            store: StoreConfig::default(),
            gossip_interval_ms: 1000.0,
            workload: WorkloadConfig::default(),
            faults: Vec::new(),
            duration_s: 300.0,
            drain_s: 30.0,
            stall_horizon_s: 20.0,
            sample_interval_s: 60.0,
            max_block_txs: 64,
            kdf: KdfCost::light(),
        }
    }
}

impl ScenarioConfig {
    /// Checks every cross-field constraint.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &'static str| Err(HarnessError::Config(msg));
        if self.nodes < 4 {
            return bad("at least 4 nodes are required");
        }
        let positive = [
            self.arena_m,
            self.transmission_range_m,
            self.interference_range_m,
            self.link_capacity_kbps,
            self.gossip_interval_ms,
            self.duration_s,
            self.stall_horizon_s,
            self.sample_interval_s,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("ranges, capacity, intervals and duration must be positive");
        }
        if !(self.drain_s.is_finite() && self.drain_s >= 0.0) {
            return bad("drain_s must be non-negative");
        }
        let l = &self.link;
        let times = [l.base_latency_ms, l.jitter_ms, l.interference_penalty_ms, l.retransmit_timeout_ms];
        if times.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || l.interference_window_ms <= 0.0 {
            return bad("link timings must be non-negative");
        }
        if !(0.0..1.0).contains(&l.drop_probability) {
            return bad("drop probability must be in [0, 1)");
        }
        if l.max_attempts == 0 {
            return bad("max_attempts must be at least 1");
        }
        if self.timeout_ms.is_some_and(|t| !(t.is_finite() && t > 0.0)) {
            return bad("timeout_ms must be positive");
        }
        if self.max_block_txs == 0 {
            return bad("max_block_txs must be at least 1");
        }
        self.kdf.validate().map_err(|_| HarnessError::Config("KDF cost out of range"))?;
        self.store.validate(self.nodes).map_err(HarnessError::Store)?;
        let w = &self.workload;
        if !(w.records_per_minute.is_finite() && w.records_per_minute >= 0.0) {
            return bad("records_per_minute must be non-negative");
        }
        let m = &w.mix;
        if [m.grant, m.revoke, m.read, m.denied_probe].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("mix weights must be non-negative");
        }
        if w.record_size.min_bytes == 0 || w.record_size.min_bytes > w.record_size.max_bytes {
            return bad("record sizes must satisfy 1 <= min <= max");
        }
        if !(w.register_spacing_ms.is_finite() && w.register_spacing_ms >= 0.0) {
            return bad("register_spacing_ms must be non-negative");
        }
        if w.records_per_minute > 0.0 && w.patients == 0 {
            return bad("record traffic needs at least one patient");
        }
        let mut faulty = alloc::collections::BTreeSet::new();
        for spec in &self.faults {
            if spec.node.index() >= self.nodes {
                return Err(HarnessError::Sim(crate::simnet::SimError::UnknownNode(spec.node)));
            }
            if !(spec.at_ms.is_finite() && spec.at_ms >= 0.0) || spec.until_ms.is_some_and(|u| u < spec.at_ms) {
                return bad("fault windows must satisfy 0 <= at_ms <= until_ms");
            }
            match &spec.behavior {
                FaultBehavior::Partition { group } => {
                    if group.is_empty() || group.len() >= self.nodes {
                        return bad("a partition group must be a proper non-empty subset");
                    }
                    if let Some(n) = group.iter().find(|n| n.index() >= self.nodes) {
                        return Err(HarnessError::Sim(crate::simnet::SimError::UnknownNode(*n)));
                    }
                }
                FaultBehavior::Delayed { extra_ms } if !(extra_ms.is_finite() && *extra_ms >= 0.0) => {
                    return bad("extra_ms must be non-negative");
                }
                _ => {
                    faulty.insert(spec.node);
                }
            }
        }
        if faulty.len() > self.nodes {
            return bad("more faulty nodes than nodes");
        }
        Ok(())
    }

    pub fn max_faults(&self) -> usize {
        max_faults(self.nodes)
    }

    /// Timeout in effect for `topology`.
    pub fn effective_timeout(&self, topology: &Topology) -> SimDuration {
        match self.timeout_ms {
            Some(ms) => SimDuration::from_millis_f64(ms),
            None => {
                let hops = topology.diameter().max(1) as f64;
                SimDuration::from_millis_f64(10.0 * self.link.base_latency_ms.max(1.0) * hops)
            }
        }
    }
}
