//! A front desk persisted in a directory:
//!
//! ```text
//! desk.json          users, key seeds, TOTP secrets, cluster seed, clock
//! chain.bin          binary chain export
//! records/<addr>.env sealed record envelopes, named by content address
//! ```
//!
//! `desk.json` holds signing keys and TOTP secrets in the clear; the
//! directory is a local test fixture, not a key store.

use std::fs;
use std::path::{Path, PathBuf};

use healthledger_core::harness::{Desk, DeskError, DeskState};
use healthledger_core::store::ContentAddress;
use thiserror::Error;

use crate::formats::{self, FormatError};

pub const STATE: &str = "desk.json";
pub const CHAIN: &str = "chain.bin";
pub const RECORDS: &str = "records";

#[derive(Debug, Error)]
pub enum DeskDirError {
    #[error("no desk at {0}; create one with `user register --seed N`")]
    Missing(PathBuf),
    #[error("a desk already exists at {0}")]
    Exists(PathBuf),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Desk(#[from] DeskError),
    #[error("{path}: envelope file name does not match its content address")]
    Misnamed { path: PathBuf },
}

pub struct DeskDir {
    root: PathBuf,
}

impl DeskDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DeskDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn exists(&self) -> bool {
        self.root.join(STATE).is_file()
    }

    pub fn chain_path(&self) -> PathBuf {
        self.root.join(CHAIN)
    }

    pub fn record_path(&self, address: &ContentAddress) -> PathBuf {
        self.root.join(RECORDS).join(format!("{}.env", address.0))
    }

    pub fn create(&self, seed: u64, nodes: usize, kdf: healthledger_core::crypto::KdfCost, unix_now: u64) -> Result<Desk, DeskDirError> {
        if self.exists() {
            return Err(DeskDirError::Exists(self.root.clone()));
        }
        Ok(Desk::create(seed, nodes, kdf, unix_now)?)
    }

    /// Loads the desk, validating the chain and every envelope's address.
    pub fn load(&self, unix_now: u64) -> Result<Desk, DeskDirError> {
        if !self.exists() {
            return Err(DeskDirError::Missing(self.root.clone()));
        }
        let state_path = self.root.join(STATE);
        let state: DeskState = serde_json::from_slice(&formats::read_file(&state_path)?)
            .map_err(|e| FormatError::Parse { path: state_path, message: e.to_string() })?;
        let chain_path = self.chain_path();
        let chain = if chain_path.is_file() { Some(formats::load_chain(&chain_path)?) } else { None };
        let mut named = Vec::new();
        let mut envelopes = Vec::new();
        let dir = self.root.join(RECORDS);
        if dir.is_dir() {
            let entries = fs::read_dir(&dir).map_err(|source| FormatError::Io { path: dir.clone(), source })?;
            let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
            paths.sort();
            for path in paths.into_iter().filter(|p| p.extension().is_some_and(|e| e == "env")) {
                envelopes.push(formats::read_file(&path)?);
                named.push(path);
            }
        }
        let desk = Desk::load(state, chain, envelopes, unix_now)?;
        for path in named {
            let address = path.file_stem().and_then(|s| s.to_str()).and_then(ContentAddress::from_hex);
            if !address.is_some_and(|a| desk.envelopes().contains_key(&a)) {
                return Err(DeskDirError::Misnamed { path });
            }
        }
        Ok(desk)
    }

    pub fn save(&self, desk: &Desk) -> Result<(), DeskDirError> {
        for (address, bytes) in desk.envelopes() {
            let path = self.record_path(address);
            if !path.is_file() {
                formats::write_file(&path, bytes)?;
            }
        }
        formats::write_file(&self.chain_path(), &desk.chain().export())?;
        let state = serde_json::to_vec_pretty(&desk.state()).map_err(FormatError::Json)?;
        formats::write_file(&self.root.join(STATE), &state)?;
        Ok(())
    }
}
