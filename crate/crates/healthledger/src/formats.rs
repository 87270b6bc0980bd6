//! On-disk formats: scenario files, reports (JSON and flattened CSV),
//! JSON-lines traces and commit logs, store snapshots and chain exports.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use healthledger_core::harness::{MetricsReport, ScenarioConfig};
use healthledger_core::ledger::{Action, Chain, LedgerError};
use healthledger_core::store::{ContentAddress, SnapshotEntry};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Ledger { path: PathBuf, source: LedgerError },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|source| FormatError::Io { path: path.into(), source })
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let io_err = |source| FormatError::Io { path: path.into(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

fn parse_error(path: &Path, message: impl ToString) -> FormatError {
    FormatError::Parse { path: path.into(), message: message.to_string() }
}

/// Scenario files are TOML when the extension says so, JSON otherwise.
/// Unknown keys are rejected; missing keys take their defaults.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, FormatError> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| parse_error(path, e))?;
    parse_scenario(text, is_toml(path)).map_err(|m| parse_error(path, m))
}

pub fn parse_scenario(text: &str, toml: bool) -> Result<ScenarioConfig, String> {
    if toml {
        toml::from_str(text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}

fn is_toml(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"))
}

pub fn report_json(report: &MetricsReport) -> Result<Vec<u8>, FormatError> {
    let mut out = serde_json::to_vec_pretty(report)?;
    out.push(b'\n');
    Ok(out)
}

pub fn load_report(path: &Path) -> Result<MetricsReport, FormatError> {
    serde_json::from_slice(&read_file(path)?).map_err(|e| parse_error(path, e))
}

/// Dotted column names and values for every scalar in a report, except the
/// definitions table.
pub fn flatten_report(report: &MetricsReport) -> Result<Vec<(String, String)>, FormatError> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let name = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&name, child, out);
                }
            }
            Value::Null => out.push((prefix.into(), String::new())),
            Value::String(s) => out.push((prefix.into(), s.clone())),
            other => out.push((prefix.into(), other.to_string())),
        }
    }
    let mut value = serde_json::to_value(report)?;
    if let Value::Object(map) = &mut value {
        map.remove("definitions");
    }
    let mut out = Vec::new();
    walk("", &value, &mut out);
    Ok(out)
}

/// One header row, then one row per report.
pub fn reports_csv(reports: &[MetricsReport]) -> Result<Vec<u8>, FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Option<Vec<String>> = None;
    for r in reports {
        let row = flatten_report(r)?;
        if header.is_none() {
            let names: Vec<String> = row.iter().map(|(k, _)| k.clone()).collect();
            w.write_record(&names)?;
            header = Some(names);
        }
        w.write_record(row.iter().map(|(_, v)| v))?;
    }
    w.into_inner().map_err(|e| FormatError::Csv(e.into_error().into()))
}

pub fn jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

#[derive(Serialize)]
struct SnapshotView<'a> {
    objects: usize,
    entries: &'a BTreeMap<ContentAddress, SnapshotEntry>,
}

pub fn store_snapshot_json(store: &BTreeMap<ContentAddress, SnapshotEntry>) -> Result<Vec<u8>, FormatError> {
    let mut out = serde_json::to_vec_pretty(&SnapshotView { objects: store.len(), entries: store })?;
    out.push(b'\n');
    Ok(out)
}

/// Imports and fully validates a binary chain export.
pub fn load_chain(path: &Path) -> Result<Chain, FormatError> {
    Chain::import(&read_file(path)?).map_err(|source| FormatError::Ledger { path: path.into(), source })
}

#[derive(Debug, Serialize)]
pub struct ChainDump {
    pub height: u64,
    pub transactions: usize,
    pub tip: String,
    pub users: usize,
    pub records: usize,
    pub live_grants: usize,
    pub blocks: Vec<BlockDump>,
}

#[derive(Debug, Serialize)]
pub struct BlockDump {
    pub height: u64,
    pub hash: String,
    pub prev_hash: String,
    pub tx_root: String,
    pub proposer: u32,
    pub view: u64,
    pub timestamp_us: u64,
    /// Validators whose commit votes finalized the block.
    pub commit_votes: Option<Vec<u32>>,
    pub transactions: Vec<TxDump>,
}

#[derive(Debug, Serialize)]
pub struct TxDump {
    pub id: String,
    pub action: Action,
    pub actor: String,
    pub subject: String,
    pub grantee: Option<String>,
    pub content_address: Option<String>,
    pub envelope_digest: Option<String>,
    pub timestamp_ms: u64,
}

pub fn dump_chain(chain: &Chain) -> ChainDump {
    let state = chain.state();
    let blocks = chain
        .entries()
        .iter()
        .map(|e| {
            let h = &e.block.header;
            BlockDump {
                height: h.height,
                hash: e.block.digest().to_string(),
                prev_hash: h.prev_hash.to_string(),
                tx_root: h.tx_root.to_string(),
                proposer: h.proposer.0,
                view: h.view,
                timestamp_us: h.timestamp_us,
                commit_votes: e.certificate.as_ref().map(|c| c.votes.iter().map(|(n, _)| n.0).collect()),
                transactions: e
                    .block
                    .transactions
                    .iter()
                    .map(|tx| TxDump {
                        id: tx.id.to_string(),
                        action: tx.action(),
                        actor: tx.actor().into(),
                        subject: tx.subject().into(),
                        grantee: tx.body.grantee.clone(),
                        content_address: tx.body.content_address.map(|a| a.0.to_string()),
                        envelope_digest: tx.body.envelope_digest.map(|d| d.to_string()),
                        timestamp_ms: tx.timestamp_ms(),
                    })
                    .collect(),
            }
        })
        .collect();
    ChainDump {
        height: chain.height(),
        transactions: chain.transaction_count(),
        tip: chain.tip_hash().to_string(),
        users: state.users().count(),
        records: state.records().count(),
        live_grants: state.grants().filter(|g| g.is_live()).count(),
        blocks,
    }
}

pub fn write_stdout(bytes: &[u8]) -> io::Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(bytes)?;
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_scenarios_agree() {
        let toml = r#"
            name = "t"
            seed = 9
            nodes = 7
            duration_s = 12.5

            [link]
            drop_probability = 0.02

            [[faults]]
            node = 3
            kind = "delayed"
            extra_ms = 40.0
        "#;
        let json = r#"{"name":"t","seed":9,"nodes":7,"duration_s":12.5,"link":{"drop_probability":0.02},
            "faults":[{"node":3,"kind":"delayed","extra_ms":40.0}]}"#;
        let a = parse_scenario(toml, true).unwrap();
        let b = parse_scenario(json, false).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.nodes, a.link.base_latency_ms, a.faults.len()), (7, 10.0, 1));
        assert!(parse_scenario("nodez = 4", true).is_err());
    }
}
