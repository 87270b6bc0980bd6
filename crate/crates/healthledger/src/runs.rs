//! Scenario runs fanned out over seeds, and their output directories.

use std::path::Path;
use std::time::Instant;

use healthledger_core::harness::{run_scenario_with_clock, HarnessError, RunOutput, ScenarioConfig, WallClock};
use rayon::prelude::*;

use crate::formats::{self, FormatError};

/// Monotonic nanoseconds since the clock was created.
pub struct InstantClock(Instant);

impl InstantClock {
    pub fn new() -> Self {
        InstantClock(Instant::now())
    }
}

impl Default for InstantClock {
    fn default() -> Self {
        Self::new()
    }
}

impl WallClock for InstantClock {
    fn now_ns(&self) -> u64 {
        self.0.elapsed().as_nanos() as u64
    }
}

/// Runs `cfg` once per seed, in parallel. Results come back in seed order
/// and each run is independent of the others, so the output does not
/// depend on the thread count.
pub fn run_seeds(cfg: &ScenarioConfig, seeds: &[u64], time_crypto: bool) -> Vec<Result<RunOutput, HarnessError>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ScenarioConfig { seed, ..cfg.clone() };
            if time_crypto {
                run_scenario_with_clock(&cfg, Some(&InstantClock::new()))
            } else {
                run_scenario_with_clock(&cfg, None)
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// File names inside a run directory.
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const TRACE: &str = "trace.jsonl";
pub const COMMITS: &str = "commits.jsonl";
pub const CHAIN: &str = "chain.bin";
pub const STORE: &str = "store.json";

/// Writes the report, trace, commit log, chain export and store snapshot of
/// one run into `dir`.
pub fn write_run(dir: &Path, out: &RunOutput, format: ReportFormat) -> Result<(), FormatError> {
    match format {
        ReportFormat::Json => formats::write_file(&dir.join(REPORT_JSON), &formats::report_json(&out.report)?)?,
        ReportFormat::Csv => formats::write_file(&dir.join(REPORT_CSV), &formats::reports_csv(std::slice::from_ref(&out.report))?)?,
    }
    formats::write_file(&dir.join(TRACE), &formats::jsonl(&out.trace)?)?;
    formats::write_file(&dir.join(COMMITS), &formats::jsonl(&out.commit_log)?)?;
    formats::write_file(&dir.join(CHAIN), &out.chain.export())?;
    formats::write_file(&dir.join(STORE), &formats::store_snapshot_json(&out.store)?)
}
