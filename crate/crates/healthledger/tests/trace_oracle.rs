//! Recomputes report metrics from the JSON-lines trace on disk, reading
//! only generic JSON, and checks them against the written report.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use healthledger::formats;
use healthledger::runs::{run_seeds, write_run, ReportFormat, REPORT_JSON, TRACE};
use healthledger_core::harness::{ScenarioConfig, WorkloadConfig};
use healthledger_core::keys::NodeId;
use healthledger_core::simnet::{FaultBehavior, FaultSpec};
use serde_json::Value;

fn scenario(faults: Vec<FaultSpec>) -> ScenarioConfig {
    ScenarioConfig {
        name: "oracle".into(),
        duration_s: 12.0,
        drain_s: 10.0,
        workload: WorkloadConfig { records_per_minute: 90.0, ..WorkloadConfig::default() },
        faults,
        ..ScenarioConfig::default()
    }
}

fn fault(node: u32, behavior: FaultBehavior) -> FaultSpec {
    FaultSpec { node: NodeId(node), behavior, at_ms: 0.0, until_ms: None }
}

fn load_trace(dir: &Path) -> Vec<Value> {
    fs::read_to_string(dir.join(TRACE)).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn u(v: &Value, k: &str) -> u64 {
    v[k].as_u64().unwrap_or_else(|| panic!("{k} missing in {v}"))
}

fn nearest_rank(mut xs: Vec<f64>, p: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * xs.len() as f64).ceil() as usize;
    xs[rank.max(1) - 1]
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn report_metrics_follow_from_the_trace() {
    let configs = [
        scenario(vec![]),
        scenario(vec![fault(0, FaultBehavior::Silent)]),
        scenario(vec![fault(3, FaultBehavior::Equivocate), fault(7, FaultBehavior::CorruptStorage)]),
    ];
    let tmp = tempfile::tempdir().unwrap();
    for (i, cfg) in configs.iter().enumerate() {
        let out = run_seeds(cfg, &[40 + i as u64], false).pop().unwrap().unwrap();
        let dir = tmp.path().join(format!("run-{i}"));
        write_run(&dir, &out, ReportFormat::Json).unwrap();
        let report = formats::load_report(&dir.join(REPORT_JSON)).unwrap();
        let trace = load_trace(&dir);

        let mut submitted_at = BTreeMap::new();
        let mut latencies = Vec::new();
        let mut proposals = BTreeSet::new();
        let (mut committed_blocks, mut failed_views, mut committed_txs) = (0u64, 0u64, 0u64);
        let (mut reads_ok, mut reads_served, mut chains, mut chains_ok) = (0u64, 0u64, 0u64, 0u64);
        let mut totals = Vec::new();
        let mut end_us = 0;
        for ev in &trace {
            match ev["event"].as_str().unwrap() {
                "submit" => {
                    submitted_at.insert(ev["tx"].as_str().unwrap().to_string(), u(ev, "t_us"));
                }
                "proposal" => {
                    proposals.insert((u(ev, "seq"), ev["digest"].as_str().unwrap().to_string()));
                }
                "failed_view" => failed_views += 1,
                "commit" => {
                    committed_blocks += 1;
                    let parts = u(ev, "pre_prepare_us") + u(ev, "prepare_us") + u(ev, "commit_us");
                    assert_eq!(parts, u(ev, "total_us"), "T must equal the sum of its stages");
                    if !ev["transferred"].as_bool().unwrap() {
                        totals.push(u(ev, "total_us") as f64 / 1000.0);
                    }
                }
                "tx_committed" => {
                    committed_txs += 1;
                    let since = u(ev, "t_us") - submitted_at[ev["tx"].as_str().unwrap()];
                    assert_eq!(since, u(ev, "latency_us"));
                    latencies.push(since as f64 / 1000.0);
                }
                "read" => match ev["outcome"].as_str().unwrap() {
                    "not_found" => {}
                    "ok" => {
                        reads_ok += 1;
                        reads_served += 1;
                    }
                    _ => reads_served += 1,
                },
                "chain_check" => {
                    chains += 1;
                    chains_ok += u64::from(ev["valid"].as_bool().unwrap());
                }
                "run_end" => end_us = u(ev, "end_us"),
                _ => {}
            }
        }
        let m = &report.metrics;
        let c = &report.counts;
        assert_eq!((c.txs_submitted, c.txs_committed), (submitted_at.len() as u64, committed_txs));
        assert_eq!((c.blocks_committed, c.blocks_proposed, c.failed_views), (committed_blocks, proposals.len() as u64, failed_views));
        let pct = |n: u64, d: u64| if d == 0 { 100.0 } else { 100.0 * n as f64 / d as f64 };
        assert!(close(m.fault_tolerance_pct, pct(committed_txs, submitted_at.len() as u64)));
        assert!(close(m.consensus_efficiency_pct, pct(committed_blocks, proposals.len() as u64 + failed_views).min(100.0)));
        assert!(close(m.data_integrity_pct, pct(reads_ok + chains_ok, reads_served + chains)));
        let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
        assert!(close(m.latency_mean_ms, mean(&latencies)));
        assert!(close(m.latency_p95_ms, nearest_rank(latencies.clone(), 95.0)));
        assert!(close(m.consensus_total_ms, mean(&totals)));
        assert!(close(m.throughput_tx_per_s, committed_txs as f64 / (end_us as f64 / 1e6)));
        assert!(reads_served > 0 && committed_txs > 20, "run {i} too small to mean anything");
    }
}

#[test]
fn parallel_seeds_match_sequential_runs() {
    let cfg = scenario(vec![fault(2, FaultBehavior::Silent)]);
    let seeds = [3, 1, 2];
    let parallel = run_seeds(&cfg, &seeds, false);
    for (seed, out) in seeds.iter().zip(parallel) {
        let alone = run_seeds(&cfg, &[*seed], false).pop().unwrap().unwrap();
        let out = out.unwrap();
        assert_eq!(out.report.seed, *seed);
        assert_eq!(formats::report_json(&out.report).unwrap(), formats::report_json(&alone.report).unwrap());
        assert_eq!(formats::jsonl(&out.trace).unwrap(), formats::jsonl(&alone.trace).unwrap());
    }
}
