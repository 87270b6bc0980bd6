use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::trace::{ReadOutcome, TraceEvent, TraceKind};
use crate::pbft::QuorumRule;
use crate::simnet::NetCounters;

pub const SCHEMA_VERSION: u32 = 1;

/// `(metric, definition id, definition)` for every reported metric.
pub const DEFINITIONS: &[(&str, &str, &str)] = &[
    (
        "data_integrity_pct",
        "integrity.v1",
        "100 x (reads returning the stored bytes + honest replica chains passing full validation) / \
         (reads served by some replica + honest chains checked); reads with no live holder are excluded",
    ),
    (
        "consensus_efficiency_pct",
        "efficiency.v1",
        "100 x committed blocks / (distinct (sequence, digest) pre-prepares put on the wire + views \
         abandoned without any pre-prepare); a re-proposal of the same block counts once",
    ),
    (
        "fault_tolerance_pct",
        "fault_tolerance.v1",
        "100 x committed transactions / submitted transactions; every submission was valid against the \
         committed state when made; 100 when nothing was submitted",
    ),
    (
        "data_availability_pct",
        "availability.v1",
        "100 x mean over availability samples (fixed interval plus one at run end) of the mean record \
         availability at that instant; samples taken before any record exists are skipped; 100 when none remain",
    ),
    ("latency_mean_ms", "latency.v1", "mean submit-to-first-honest-commit time of committed transactions, simulated milliseconds"),
    ("latency_p95_ms", "latency.v1", "nearest-rank 95th percentile of submit-to-first-honest-commit time, simulated milliseconds"),
    (
        "consensus_total_ms",
        "consensus_latency.v1",
        "mean over blocks of T = t_pre_prepare + t_prepare + t_commit at the first honest replica to \
         commit through the three phases",
    ),
    ("consensus_pre_prepare_ms", "consensus_latency.v1", "mean t_pre_prepare: proposal creation to pre-prepare accepted"),
    ("consensus_prepare_ms", "consensus_latency.v1", "mean t_prepare: pre-prepare accepted to prepare quorum"),
    ("consensus_commit_ms", "consensus_latency.v1", "mean t_commit: prepare quorum to commit quorum"),
    (
        "bandwidth_utilization_pct",
        "bandwidth.v1",
        "100 x (link-level bytes, counting every hop and retransmission, + store transfer bytes) / \
         (per-node capacity x nodes x run length), capped at 100",
    ),
    ("throughput_tx_per_s", "throughput.v1", "committed transactions per simulated second of run length"),
    ("throughput_payload_bytes_per_s", "throughput.v1", "encoded bytes of committed transactions per simulated second of run length"),
    ("throughput_mbps", "throughput.v1", "8 x throughput_payload_bytes_per_s / 10^6 (simulated payload, not NIC)"),
    (
        "encryption_mean_ms",
        "crypto_time.v1",
        "wall-clock mean time to seal one record including key derivation; machine-dependent, absent \
         unless a clock is supplied",
    ),
    (
        "decryption_mean_ms",
        "crypto_time.v1",
        "wall-clock mean time to open one record including key derivation; machine-dependent, absent \
         unless a clock is supplied",
    ),
];

pub fn definitions() -> BTreeMap<String, String> {
    DEFINITIONS.iter().map(|(m, id, text)| (m.to_string(), alloc::format!("{id}: {text}"))).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub data_integrity_pct: f64,
    pub consensus_efficiency_pct: f64,
    pub fault_tolerance_pct: f64,
    pub data_availability_pct: f64,
    pub latency_mean_ms: f64,
    pub latency_p95_ms: f64,
    pub consensus_total_ms: f64,
    pub consensus_pre_prepare_ms: f64,
    pub consensus_prepare_ms: f64,
    pub consensus_commit_ms: f64,
    pub bandwidth_utilization_pct: f64,
    pub throughput_tx_per_s: f64,
    pub throughput_payload_bytes_per_s: f64,
    pub throughput_mbps: f64,
    pub encryption_mean_ms: Option<f64>,
    pub decryption_mean_ms: Option<f64>,
}

impl Metrics {
    /// `(name, value)` in definition order.
    pub fn values(&self) -> Vec<(&'static str, Option<f64>)> {
        let v = [
            Some(self.data_integrity_pct),
            Some(self.consensus_efficiency_pct),
            Some(self.fault_tolerance_pct),
            Some(self.data_availability_pct),
            Some(self.latency_mean_ms),
            Some(self.latency_p95_ms),
            Some(self.consensus_total_ms),
            Some(self.consensus_pre_prepare_ms),
            Some(self.consensus_prepare_ms),
            Some(self.consensus_commit_ms),
            Some(self.bandwidth_utilization_pct),
            Some(self.throughput_tx_per_s),
            Some(self.throughput_payload_bytes_per_s),
            Some(self.throughput_mbps),
            self.encryption_mean_ms,
            self.decryption_mean_ms,
        ];
        DEFINITIONS.iter().map(|d| d.0).zip(v).collect()
    }

    pub fn percentages(&self) -> [f64; 5] {
        [
            self.data_integrity_pct,
            self.consensus_efficiency_pct,
            self.fault_tolerance_pct,
            self.data_availability_pct,
            self.bandwidth_utilization_pct,
        ]
    }
}

/// Raw tallies behind the metrics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub txs_submitted: u64,
    pub txs_committed: u64,
    pub blocks_committed: u64,
    pub blocks_proposed: u64,
    pub failed_views: u64,
    pub reads_ok: u64,
    pub reads_wrong_bytes: u64,
    pub reads_integrity_failed: u64,
    pub reads_not_found: u64,
    pub denied: u64,
    pub chains_checked: u64,
    pub chains_valid: u64,
    pub view_changes: u64,
    pub new_views: u64,
    pub safety_violations: u64,
    /// Most views any transaction needed, counting from the view of its
    /// first pre-prepare through the view that committed it.
    pub max_views_to_commit: u64,
    pub availability_samples: u64,
    pub gossip_transfers: u64,
    pub gossip_rejected: u64,
    pub store_bytes: u64,
    pub committed_payload_bytes: u64,
    pub end_us: u64,
    pub network: NetCounters,
    /// Commits, at any replica, whose breakdown was checked against
    /// `T = t_pre_prepare + t_prepare + t_commit`.
    pub breakdowns_checked: u64,
    pub breakdown_mismatches: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub nodes: usize,
    pub max_faults: usize,
    pub quorum: usize,
    pub quorum_rule: QuorumRule,
    pub faulty_nodes: usize,
    pub tolerance_exceeded: bool,
    pub stalled: bool,
    pub metrics: Metrics,
    pub counts: RunCounts,
    pub definitions: BTreeMap<String, String>,
}

fn pct(num: u64, den: u64) -> f64 {
    if den == 0 {
        100.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Nearest-rank percentile: the `ceil(p/100 × n)`-th smallest value.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = libm::ceil(p / 100.0 * sorted.len() as f64) as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Computes every trace-derived metric and tally.
pub fn fold_trace(trace: &[TraceEvent]) -> (Metrics, RunCounts) {
    let mut c = RunCounts::default();
    let mut latencies = Vec::new();
    let mut stages: [Vec<f64>; 4] = Default::default();
    let mut samples = Vec::new();
    let mut proposals = BTreeSet::new();
    let mut capacity = 0.0;
    let mut nodes = 0usize;
    for ev in trace {
        match &ev.kind {
            TraceKind::Submit { .. } => c.txs_submitted += 1,
            TraceKind::Proposal { seq, digest, .. } => {
                proposals.insert((*seq, *digest));
            }
            TraceKind::ViewChange { .. } => c.view_changes += 1,
            TraceKind::NewView { .. } => c.new_views += 1,
            TraceKind::FailedView { .. } => c.failed_views += 1,
            TraceKind::Commit { payload_bytes, transferred, pre_prepare_us, prepare_us, commit_us, total_us, .. } => {
                c.blocks_committed += 1;
                c.committed_payload_bytes += *payload_bytes as u64;
                if !transferred {
                    for (acc, us) in stages.iter_mut().zip([total_us, pre_prepare_us, prepare_us, commit_us]) {
                        acc.push(*us as f64 / 1000.0);
                    }
                }
            }
            TraceKind::TxCommitted { latency_us, proposed_view, commit_view, .. } => {
                c.txs_committed += 1;
                latencies.push(*latency_us as f64 / 1000.0);
                c.max_views_to_commit = c.max_views_to_commit.max(commit_view.saturating_sub(*proposed_view) + 1);
            }
            TraceKind::Read { outcome, .. } => match outcome {
                ReadOutcome::Ok => c.reads_ok += 1,
                ReadOutcome::WrongBytes => c.reads_wrong_bytes += 1,
                ReadOutcome::IntegrityFailure => c.reads_integrity_failed += 1,
                ReadOutcome::NotFound => c.reads_not_found += 1,
            },
            TraceKind::Denied { .. } => c.denied += 1,
            TraceKind::Gossip { transfers, rejected, bytes } => {
                c.gossip_transfers += *transfers as u64;
                c.gossip_rejected += *rejected as u64;
                c.store_bytes += bytes;
            }
            TraceKind::Availability { records, mean } => {
                if *records > 0 {
                    samples.push(*mean);
                }
            }
            TraceKind::ChainCheck { valid, .. } => {
                c.chains_checked += 1;
                c.chains_valid += u64::from(*valid);
            }
            TraceKind::SafetyViolation { .. } => c.safety_violations += 1,
            TraceKind::RunEnd { end_us, capacity_bytes_per_s, nodes: n, store_bytes, network } => {
                c.end_us = *end_us;
                capacity = *capacity_bytes_per_s;
                nodes = *n;
                c.store_bytes += store_bytes;
                c.network = *network;
            }
            _ => {}
        }
    }
    c.blocks_proposed = proposals.len() as u64;
    c.availability_samples = samples.len() as u64;
    let secs = c.end_us as f64 / 1e6;
    let per_sec = |x: f64| if secs > 0.0 { x / secs } else { 0.0 };
    let reads_served = c.reads_ok + c.reads_wrong_bytes + c.reads_integrity_failed;
    let air = (c.network.bytes_on_air + c.store_bytes) as f64;
    let budget = capacity * nodes as f64 * secs;
    let m = Metrics {
        data_integrity_pct: pct(c.reads_ok + c.chains_valid, reads_served + c.chains_checked),
        consensus_efficiency_pct: pct(c.blocks_committed, c.blocks_proposed + c.failed_views).min(100.0),
        fault_tolerance_pct: pct(c.txs_committed, c.txs_submitted),
        data_availability_pct: if samples.is_empty() { 100.0 } else { 100.0 * mean(&samples) },
        latency_mean_ms: mean(&latencies),
        latency_p95_ms: percentile(&latencies, 95.0),
        consensus_total_ms: mean(&stages[0]),
        consensus_pre_prepare_ms: mean(&stages[1]),
        consensus_prepare_ms: mean(&stages[2]),
        consensus_commit_ms: mean(&stages[3]),
        bandwidth_utilization_pct: if budget > 0.0 { (100.0 * air / budget).min(100.0) } else { 0.0 },
        throughput_tx_per_s: per_sec(c.txs_committed as f64),
        throughput_payload_bytes_per_s: per_sec(c.committed_payload_bytes as f64),
        throughput_mbps: per_sec(c.committed_payload_bytes as f64) * 8.0 / 1e6,
        encryption_mean_ms: None,
        decryption_mean_ms: None,
    };
    (m, c)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompareError {
    #[error("need at least two reports, got {0}")]
    TooFew(usize),
    #[error("report {index} defines {metric} differently from the baseline")]
    DefinitionMismatch { index: usize, metric: String },
    #[error("report {index} has schema version {found}, expected {expected}")]
    SchemaMismatch { index: usize, found: u32, expected: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub definition: String,
    pub values: Vec<Option<f64>>,
    /// `value - baseline` for each report; the baseline's own delta is 0.
    pub deltas: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `scenario#seed` for each report, baseline first.
    pub labels: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

/// Side-by-side metrics against the first report.
pub fn compare(reports: &[MetricsReport]) -> Result<Comparison, CompareError> {
    let Some(base) = reports.first().filter(|_| reports.len() >= 2) else {
        return Err(CompareError::TooFew(reports.len()));
    };
    for (index, r) in reports.iter().enumerate() {
        if r.schema_version != base.schema_version {
            return Err(CompareError::SchemaMismatch { index, found: r.schema_version, expected: base.schema_version });
        }
        let keys: BTreeSet<&String> = r.definitions.keys().chain(base.definitions.keys()).collect();
        if let Some(metric) = keys.into_iter().find(|k| r.definitions.get(*k) != base.definitions.get(*k)) {
            return Err(CompareError::DefinitionMismatch { index, metric: metric.clone() });
        }
    }
    let columns: Vec<_> = reports.iter().map(|r| r.metrics.values()).collect();
    let rows = base
        .metrics
        .values()
        .iter()
        .enumerate()
        .map(|(i, (name, b))| {
            let values: Vec<Option<f64>> = columns.iter().map(|c| c[i].1).collect();
            let deltas = values.iter().map(|v| Some((*v)? - (*b)?)).collect();
            ComparisonRow { metric: name.to_string(), definition: base.definitions.get(*name).cloned().unwrap_or_default(), values, deltas }
        })
        .collect();
    Ok(Comparison { labels: reports.iter().map(|r| alloc::format!("{}#{}", r.scenario, r.seed)).collect(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentile() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&xs, 95.0), 19.0);
        assert_eq!(percentile(&xs, 100.0), 20.0);
        assert_eq!(percentile(&[5.0], 95.0), 5.0);
        assert_eq!(percentile(&[], 95.0), 0.0);
    }

    #[test]
    fn every_metric_has_a_definition() {
        let names: Vec<_> = Metrics::default().values().into_iter().map(|(n, _)| n).collect();
        let defs = definitions();
        assert_eq!(names.len(), defs.len());
        assert!(names.iter().all(|n| defs.contains_key(*n)));
    }

    fn report() -> MetricsReport {
        MetricsReport {
            schema_version: SCHEMA_VERSION,
            scenario: "x".into(),
            seed: 1,
            nodes: 4,
            max_faults: 1,
            quorum: 3,
            quorum_rule: QuorumRule::TwoThirds,
            faulty_nodes: 0,
            tolerance_exceeded: false,
            stalled: false,
            metrics: Metrics { latency_mean_ms: 12.5, ..Metrics::default() },
            counts: RunCounts::default(),
            definitions: definitions(),
        }
    }

    #[test]
    fn self_comparison_has_zero_deltas() {
        let r = report();
        let cmp = compare(&[r.clone(), r]).unwrap();
        assert!(cmp.rows.iter().all(|row| row.deltas.iter().all(|d| d.map_or(true, |d| d == 0.0))));
    }

    #[test]
    fn mismatched_definitions_are_rejected() {
        let a = report();
        let mut b = report();
        b.definitions.insert("latency_mean_ms".into(), "latency.v2: something else".into());
        assert_eq!(compare(&[a.clone(), b]).unwrap_err(), CompareError::DefinitionMismatch { index: 1, metric: "latency_mean_ms".into() });
        assert_eq!(compare(&[a]).unwrap_err(), CompareError::TooFew(1));
    }
}
