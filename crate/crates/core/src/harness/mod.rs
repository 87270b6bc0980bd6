//! End-to-end scenarios: a simulated cluster under a synthetic EHR
//! workload, with every reported metric folded from the run trace under an
//! explicit definition.

mod cluster;
mod config;
mod desk;
mod metrics;
mod trace;
mod workload;

pub use cluster::{Cluster, CommitRecord, LiveChecks, NodeApp, Step};
pub use config::{LinkConfig, OpMix, ScenarioConfig, SizeRange, WorkloadConfig};
pub use desk::{Committed, Desk, DeskError, DeskState, DeskUser, FetchedRecord, Registered, StoredRecord};
pub use metrics::{
    compare, definitions, fold_trace, percentile, CompareError, Comparison, ComparisonRow, Metrics, MetricsReport, RunCounts, DEFINITIONS,
    SCHEMA_VERSION,
};
pub use trace::{ReadOutcome, TraceEvent, TraceKind};
pub use workload::{WallClock, Workload};

use alloc::collections::BTreeMap;

use thiserror::Error;

use crate::ledger::{Chain, LedgerError};
use crate::pbft::ConsensusError;
use crate::rng::{fork, seeded};
use crate::simnet::SimError;
use crate::store::{ContentAddress, SnapshotEntry, StoreError};
use crate::time::{SimDuration, SimTime};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Sim(SimError),
    #[error(transparent)]
    Store(StoreError),
    #[error(transparent)]
    Consensus(ConsensusError),
    #[error(transparent)]
    Ledger(LedgerError),
}

/// Everything a run produces.
pub struct RunOutput {
    pub report: MetricsReport,
    pub trace: alloc::vec::Vec<TraceEvent>,
    pub commit_log: alloc::vec::Vec<CommitRecord>,
    /// The committed ledger.
    pub chain: Chain,
    pub store: BTreeMap<ContentAddress, SnapshotEntry>,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, HarnessError> {
    run_scenario_with_clock(cfg, None)
}

/// Like [`run_scenario`], additionally timing seal and open against
/// `clock`. The timings make the report machine-dependent.
pub fn run_scenario_with_clock(cfg: &ScenarioConfig, clock: Option<&dyn WallClock>) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    let mut cluster = Cluster::new(cfg, &mut rng)?;
    let mut workload = Workload::new(cfg, fork(&mut rng, 4));
    let stop = SimTime(SimDuration::from_millis_f64(cfg.duration_s * 1000.0).micros());
    let hard_end = stop + SimDuration::from_millis_f64(cfg.drain_s * 1000.0);
    cluster.start_periodic(hard_end);
    workload.start(&mut cluster);
    loop {
        let step = cluster.step_until(stop);
        workload.absorb(cluster.take_committed());
        match step {
            Step::Client => workload.on_client(&mut cluster, clock),
            Step::Limit | Step::Idle | Step::Stalled => break,
        }
    }
    if !cluster.is_stalled() {
        cluster.settle(hard_end);
    }
    cluster.finish();
    let (metrics, mut counts) = fold_trace(cluster.trace());
    let checks = cluster.checks();
    counts.breakdowns_checked = checks.breakdowns_checked;
    counts.breakdown_mismatches = checks.breakdown_mismatches;
    let (enc, dec) = workload.crypto_times();
    let faulty = cluster.faults().faulty_nodes().len();
    let q = *cluster.quorum();
    let report = MetricsReport {
        schema_version: SCHEMA_VERSION,
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        nodes: cfg.nodes,
        max_faults: q.max_faults,
        quorum: q.quorum,
        quorum_rule: cfg.quorum_rule,
        faulty_nodes: faulty,
        tolerance_exceeded: faulty > q.max_faults,
        stalled: cluster.is_stalled(),
        metrics: Metrics { encryption_mean_ms: enc, decryption_mean_ms: dec, ..metrics },
        counts,
        definitions: definitions(),
    };
    Ok(RunOutput {
        report,
        trace: cluster.trace().to_vec(),
        commit_log: cluster.commit_log().to_vec(),
        chain: cluster.observer().clone(),
        store: cluster.store().snapshot(),
    })
}
