//! Content-addressed object store replicated across simulated nodes.
//!
//! Records are split into chunks. Each chunk is stored as a leaf object and
//! the ordered chunk list as a manifest object; a record's address is the
//! address of its manifest, or of its single leaf when it fits in one chunk.
//! Objects carry a one-byte kind tag, so a leaf can never be mistaken for a
//! manifest.

mod address;
mod manifest;

pub use address::ContentAddress;
pub use manifest::ChunkManifest;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keys::NodeId;
use crate::simnet::Topology;

pub const MIN_CHUNK_SIZE: usize = 1024;
pub const DEFAULT_CHUNK_SIZE: usize = 256 * 1024;

const LEAF_TAG: u8 = 0;
const MANIFEST_TAG: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("node {0} is dead")]
    NodeDead(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("refusing to store empty data")]
    EmptyData,
    #[error("no live replica of {0}")]
    NotFound(ContentAddress),
    #[error("every replica of {0} failed verification")]
    IntegrityFailure(ContentAddress),
    #[error("address {0} was never stored")]
    UnknownAddress(ContentAddress),
    #[error("invalid store config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreConfig {
    pub replication_factor: usize,
    pub gossip_fanout: usize,
    pub chunk_size: usize,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig { replication_factor: 3, gossip_fanout: 2, chunk_size: DEFAULT_CHUNK_SIZE }
    }
}

impl StoreConfig {
    pub fn validate(&self, n_nodes: usize) -> Result<(), StoreError> {
        if self.replication_factor == 0 || self.replication_factor > n_nodes {
            return Err(StoreError::InvalidConfig("replication factor must be within 1..=node count"));
        }
        if self.gossip_fanout == 0 {
            return Err(StoreError::InvalidConfig("gossip fanout must be at least 1"));
        }
        if self.chunk_size < MIN_CHUNK_SIZE {
            return Err(StoreError::InvalidConfig("chunk size must be at least 1 KiB"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Leaf,
    Manifest,
}

/// One object moved between nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Transfer {
    pub from: NodeId,
    pub to: NodeId,
    pub address: ContentAddress,
    pub bytes: usize,
    /// False when the receiver rejected the bytes.
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Retrieved {
    pub data: Vec<u8>,
    pub transfers: Vec<Transfer>,
}

#[derive(Clone, Debug)]
struct ObjectInfo {
    kind: ObjectKind,
    size: usize,
    chunks: Vec<ContentAddress>,
}

/// Store snapshot entry, keyed by address.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub kind: ObjectKind,
    pub size: usize,
    pub replicas: Vec<NodeId>,
    pub chunks: Vec<ContentAddress>,
}

/// Which nodes hold a verified copy of each object.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReplicaMap {
    placements: BTreeMap<ContentAddress, BTreeSet<NodeId>>,
}

impl ReplicaMap {
    pub fn holders(&self, addr: &ContentAddress) -> impl Iterator<Item = NodeId> + '_ {
        self.placements.get(addr).into_iter().flatten().copied()
    }

    pub fn holds(&self, addr: &ContentAddress, node: NodeId) -> bool {
        self.placements.get(addr).is_some_and(|s| s.contains(&node))
    }

    pub fn count(&self, addr: &ContentAddress) -> usize {
        self.placements.get(addr).map_or(0, |s| s.len())
    }

    pub fn addresses(&self) -> impl Iterator<Item = &ContentAddress> {
        self.placements.keys()
    }

    fn add(&mut self, addr: ContentAddress, node: NodeId) {
        self.placements.entry(addr).or_default().insert(node);
    }

    fn remove_node(&mut self, node: NodeId) {
        for set in self.placements.values_mut() {
            set.remove(&node);
        }
    }
}

#[derive(Clone, Debug)]
pub struct ContentStore {
    config: StoreConfig,
    local: Vec<BTreeMap<ContentAddress, Arc<[u8]>>>,
    replicas: ReplicaMap,
    index: BTreeMap<ContentAddress, ObjectInfo>,
    dead: BTreeSet<NodeId>,
    corrupt: BTreeSet<NodeId>,
}

impl ContentStore {
    pub fn new(config: StoreConfig, n_nodes: usize) -> Result<Self, StoreError> {
        config.validate(n_nodes)?;
        Ok(ContentStore {
            config,
            local: vec![BTreeMap::new(); n_nodes],
            replicas: ReplicaMap::default(),
            index: BTreeMap::new(),
            dead: BTreeSet::new(),
            corrupt: BTreeSet::new(),
        })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn replicas(&self) -> &ReplicaMap {
        &self.replicas
    }

    pub fn n_nodes(&self) -> usize {
        self.local.len()
    }

    pub fn is_alive(&self, node: NodeId) -> bool {
        !self.dead.contains(&node)
    }

    /// Marks a node as serving bit-flipped copies of everything it holds.
    pub fn set_corrupt(&mut self, node: NodeId, corrupt: bool) {
        if corrupt {
            self.corrupt.insert(node);
        } else {
            self.corrupt.remove(&node);
        }
    }

    /// Drops every copy the node held.
    pub fn on_node_death(&mut self, node: NodeId) {
        if let Some(objects) = self.local.get_mut(node.index()) {
            objects.clear();
        }
        self.dead.insert(node);
        self.replicas.remove_node(node);
    }

    pub fn holds(&self, node: NodeId, addr: &ContentAddress) -> bool {
        self.local.get(node.index()).is_some_and(|m| m.contains_key(addr))
    }

    pub fn live_replicas(&self, addr: &ContentAddress) -> usize {
        self.replicas.holders(addr).filter(|n| self.is_alive(*n)).count()
    }

    pub fn kind(&self, addr: &ContentAddress) -> Option<ObjectKind> {
        self.index.get(addr).map(|i| i.kind)
    }

    /// Chunk list of a record root: the manifest's chunks, or the root itself
    /// for a single-leaf record.
    pub fn chunks_of(&self, root: &ContentAddress) -> Result<Vec<ContentAddress>, StoreError> {
        let info = self.index.get(root).ok_or(StoreError::UnknownAddress(*root))?;
        Ok(match info.kind {
            ObjectKind::Leaf => vec![*root],
            ObjectKind::Manifest => info.chunks.clone(),
        })
    }

    pub fn manifest(&self, root: &ContentAddress) -> Option<ChunkManifest> {
        let info = self.index.get(root)?;
        (info.kind == ObjectKind::Manifest).then(|| ChunkManifest { total_size: info.size as u64, chunk_addresses: info.chunks.clone() })
    }

    fn check_node(&self, node: NodeId) -> Result<(), StoreError> {
        if node.index() >= self.local.len() {
            return Err(StoreError::UnknownNode(node));
        }
        if !self.is_alive(node) {
            return Err(StoreError::NodeDead(node));
        }
        Ok(())
    }

    fn insert_local(&mut self, node: NodeId, addr: ContentAddress, object: Arc<[u8]>) {
        self.local[node.index()].insert(addr, object);
        self.replicas.add(addr, node);
    }

    /// Chunks `data`, stores every object at `node`, and returns the root
    /// address.
    pub fn put(&mut self, data: &[u8], node: NodeId) -> Result<ContentAddress, StoreError> {
        self.check_node(node)?;
        if data.is_empty() {
            return Err(StoreError::EmptyData);
        }
        let mut chunk_addrs = Vec::with_capacity(data.len().div_ceil(self.config.chunk_size));
        for chunk in data.chunks(self.config.chunk_size) {
            let object = tag_object(LEAF_TAG, chunk);
            let addr = ContentAddress::of(&object);
            self.index.entry(addr).or_insert(ObjectInfo { kind: ObjectKind::Leaf, size: chunk.len(), chunks: Vec::new() });
            self.insert_local(node, addr, object.into());
            chunk_addrs.push(addr);
        }
        if chunk_addrs.len() == 1 {
            return Ok(chunk_addrs[0]);
        }
        let manifest = ChunkManifest { total_size: data.len() as u64, chunk_addresses: chunk_addrs };
        let object = tag_object(MANIFEST_TAG, &manifest.encode());
        let addr = ContentAddress::of(&object);
        self.index.entry(addr).or_insert(ObjectInfo { kind: ObjectKind::Manifest, size: data.len(), chunks: manifest.chunk_addresses });
        self.insert_local(node, addr, object.into());
        Ok(addr)
    }

    /// Reassembles the record at `root` for `node`, fetching and verifying
    /// any object it lacks. Fetched objects are cached locally.
    pub fn get(&mut self, root: &ContentAddress, node: NodeId) -> Result<Retrieved, StoreError> {
        self.check_node(node)?;
        let mut transfers = Vec::new();
        let object = self.resolve(root, node, &mut transfers)?;
        let (tag, body) = object.split_first().ok_or(StoreError::IntegrityFailure(*root))?;
        let data = match *tag {
            LEAF_TAG => body.to_vec(),
            MANIFEST_TAG => {
                let manifest = ChunkManifest::decode(body).map_err(|_| StoreError::IntegrityFailure(*root))?;
                let mut out = Vec::with_capacity(manifest.total_size as usize);
                for chunk in &manifest.chunk_addresses {
                    let object = self.resolve(chunk, node, &mut transfers)?;
                    match object.split_first() {
                        Some((&LEAF_TAG, body)) => out.extend_from_slice(body),
                        _ => return Err(StoreError::IntegrityFailure(*chunk)),
                    }
                }
                if out.len() as u64 != manifest.total_size {
                    return Err(StoreError::IntegrityFailure(*root));
                }
                out
            }
            _ => return Err(StoreError::IntegrityFailure(*root)),
        };
        Ok(Retrieved { data, transfers })
    }

    fn resolve(&mut self, addr: &ContentAddress, node: NodeId, transfers: &mut Vec<Transfer>) -> Result<Arc<[u8]>, StoreError> {
        if let Some(object) = self.local[node.index()].get(addr) {
            return Ok(object.clone());
        }
        let holders: Vec<NodeId> = self.replicas.holders(addr).filter(|h| *h != node && self.is_alive(*h)).collect();
        if holders.is_empty() {
            return Err(StoreError::NotFound(*addr));
        }
        for from in holders {
            let offered = self.serve(from, addr);
            let accepted = addr.verify(&offered);
            transfers.push(Transfer { from, to: node, address: *addr, bytes: offered.len(), accepted });
            if accepted {
                self.insert_local(node, *addr, offered.clone());
                return Ok(offered);
            }
        }
        Err(StoreError::IntegrityFailure(*addr))
    }

    /// What `from` sends when asked for `addr`.
    fn serve(&self, from: NodeId, addr: &ContentAddress) -> Arc<[u8]> {
        let object = self.local[from.index()][addr].clone();
        if self.corrupt.contains(&from) {
            let mut flipped = object.to_vec();
            if let Some(last) = flipped.last_mut() {
                *last ^= 0x01;
            }
            flipped.into()
        } else {
            object
        }
    }

    /// One push-offer/pull-fetch round. Live nodes, in id order, offer each
    /// under-replicated object they hold to up to `gossip_fanout` random live
    /// neighbors that lack it; receivers verify before storing.
    pub fn gossip_round<R: Rng>(&mut self, topology: &Topology, rng: &mut R) -> Vec<Transfer> {
        let mut log = Vec::new();
        let target = self.config.replication_factor;
        for u in 0..self.local.len() {
            let u = NodeId::from(u);
            if !self.is_alive(u) {
                continue;
            }
            let held: Vec<ContentAddress> = self.local[u.index()].keys().copied().collect();
            for addr in held {
                let live = self.live_replicas(&addr);
                if live >= target {
                    continue;
                }
                let candidates: Vec<NodeId> =
                    topology.neighbors(u).iter().copied().filter(|v| self.is_alive(*v) && !self.holds(*v, &addr)).collect();
                let k = self.config.gossip_fanout.min(target - live).min(candidates.len());
                let chosen: Vec<NodeId> = candidates.choose_multiple(rng, k).copied().collect();
                for v in chosen {
                    let offered = self.serve(u, &addr);
                    let accepted = addr.verify(&offered);
                    log.push(Transfer { from: u, to: v, address: addr, bytes: offered.len(), accepted });
                    if accepted {
                        self.insert_local(v, addr, offered);
                    }
                }
            }
        }
        log
    }

    /// Fraction of a record's chunks that have a holder in `live`. Zero when
    /// no live node holds the manifest.
    pub fn availability(&self, root: &ContentAddress, live: impl Fn(NodeId) -> bool) -> Result<f64, StoreError> {
        let info = self.index.get(root).ok_or(StoreError::UnknownAddress(*root))?;
        let covered = |a: &ContentAddress| self.replicas.holders(a).any(&live);
        if !covered(root) {
            return Ok(0.0);
        }
        if info.kind == ObjectKind::Leaf {
            return Ok(1.0);
        }
        let ok = info.chunks.iter().filter(|c| covered(c)).count();
        Ok(ok as f64 / info.chunks.len() as f64)
    }

    /// Availability against the store's own record of dead nodes.
    pub fn current_availability(&self, root: &ContentAddress) -> Result<f64, StoreError> {
        self.availability(root, |n| self.is_alive(n))
    }

    pub fn snapshot(&self) -> BTreeMap<ContentAddress, SnapshotEntry> {
        self.index
            .iter()
            .map(|(addr, info)| {
                let entry = SnapshotEntry {
                    kind: info.kind,
                    size: info.size,
                    replicas: self.replicas.holders(addr).collect(),
                    chunks: info.chunks.clone(),
                };
                (*addr, entry)
            })
            .collect()
    }

    /// Every locally held object matches its address.
    pub fn local_stores_verified(&self) -> bool {
        self.local.iter().all(|m| m.iter().all(|(addr, obj)| addr.verify(obj)))
    }
}

fn tag_object(tag: u8, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 1);
    out.push(tag);
    out.extend_from_slice(body);
    out
}

/// Address a single-chunk record would get.
pub fn leaf_address(data: &[u8]) -> ContentAddress {
    ContentAddress::of(&tag_object(LEAF_TAG, data))
}
