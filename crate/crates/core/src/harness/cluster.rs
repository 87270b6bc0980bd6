use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::Serialize;

use super::config::ScenarioConfig;
use super::trace::{TraceEvent, TraceKind};
use super::HarnessError;
use crate::hash::Digest;
use crate::keys::{cluster_keys, KeyPair, NodeId};
use crate::ledger::{Block, Chain, RecordTransaction};
use crate::pbft::{Application, Committed, Message, MessageKind, Output, Payload, QuorumConfig, Replica, ReplicaConfig, Status, Target};
use crate::rng::{fork, SimRng};
use crate::simnet::{build_random_topology, EventQueue, FaultBehavior, FaultTable, Network, SendOutcome};
use crate::store::{ContentAddress, ContentStore, Retrieved, StoreError};
use crate::time::{SimDuration, SimTime};

/// What travels between nodes.
#[derive(Clone, Debug)]
enum Wire {
    Consensus(Box<Message<Block>>),
    Tx(Box<RecordTransaction>),
}

#[derive(Clone, Debug)]
enum Event {
    Deliver { to: NodeId, wire: Wire },
    Timer { node: NodeId, at: SimTime },
    Client,
    Gossip,
    Sample,
    FaultStart(usize),
    FaultEnd(usize),
}

/// The ledger plus mempool a replica orders blocks for.
#[derive(Clone, Debug)]
pub struct NodeApp {
    id: NodeId,
    chain: Chain,
    mempool: BTreeMap<Digest, RecordTransaction>,
    max_block_txs: usize,
    divergences: u64,
}

impl NodeApp {
    fn offer(&mut self, tx: RecordTransaction) {
        if self.chain.locate(&tx.id).is_none() {
            self.mempool.insert(tx.id, tx);
        }
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }
}

impl Application<Block> for NodeApp {
    fn validate(&self, seq: u64, view: u64, block: &Block) -> bool {
        block.height() == seq && self.chain.validate_next(block, view).is_ok()
    }

    fn build(&mut self, _seq: u64, view: u64, now: SimTime) -> Option<Block> {
        let pending: Vec<RecordTransaction> = self.mempool.values().cloned().collect();
        let built = self.chain.build_block(&pending, self.id, view, now.micros(), self.max_block_txs);
        match built {
            Ok(b) => {
                for (id, _) in &b.excluded {
                    self.mempool.remove(id);
                }
                Some(b.block)
            }
            Err(_) => {
                self.mempool.clear();
                None
            }
        }
    }

    fn has_pending(&self) -> bool {
        !self.mempool.is_empty()
    }

    fn execute(&mut self, c: &Committed<Block>) {
        for tx in &c.proposal.transactions {
            self.mempool.remove(&tx.id);
        }
        if self.chain.apply_committed(c.proposal.clone(), c.certificate.clone()).is_err() {
            self.divergences += 1;
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    replica: Replica<Block>,
    app: NodeApp,
    armed: Option<SimTime>,
}

/// One line of the commit log: the first honest commit of each sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CommitRecord {
    pub seq: u64,
    pub view: u64,
    pub digest: Digest,
    pub proposer: NodeId,
    pub committed_by: NodeId,
    pub committed_at_us: u64,
    pub txs: usize,
    pub pre_prepare_us: Option<u64>,
    pub prepare_us: Option<u64>,
    pub commit_us: Option<u64>,
    pub total_us: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    /// A client event fired; the driver acts, then steps again.
    Client,
    /// The next event lies past the limit.
    Limit,
    /// Nothing left to simulate.
    Idle,
    /// Work has been pending without progress for the stall horizon.
    Stalled,
}

#[derive(Clone, Copy, Debug)]
struct Submitted {
    at: SimTime,
}

/// Tallies checked continuously rather than derived from the trace.
#[derive(Clone, Copy, Debug, Default)]
pub struct LiveChecks {
    pub breakdowns_checked: u64,
    pub breakdown_mismatches: u64,
    pub safety_violations: u64,
    pub divergences: u64,
}

/// A simulated cluster of PBFT replicas, their ledgers and the shared
/// content store, driven by one event queue.
pub struct Cluster {
    cfg: ScenarioConfig,
    quorum: QuorumConfig,
    timeout: SimDuration,
    queue: EventQueue<Event>,
    net: Network,
    nodes: Vec<Node>,
    faults: FaultTable,
    byzantine: BTreeSet<NodeId>,
    store: ContentStore,
    records: Vec<ContentAddress>,
    observer: Chain,
    net_rng: SimRng,
    gossip_rng: SimRng,
    trace: Vec<TraceEvent>,
    submitted: BTreeMap<Digest, Submitted>,
    committed: BTreeSet<Digest>,
    first_view: BTreeMap<Digest, u64>,
    proposals: BTreeSet<(u64, Digest)>,
    proposal_views: BTreeSet<u64>,
    decided: BTreeMap<u64, Digest>,
    max_installed_view: u64,
    commit_log: Vec<CommitRecord>,
    newly_committed: Vec<Digest>,
    last_progress: SimTime,
    periodic_until: SimTime,
    store_bytes: u64,
    checks: LiveChecks,
    stalled: bool,
}

impl Cluster {
    /// Builds topology, keys, replicas and store from `cfg`, drawing every
    /// random choice from `rng`.
    pub fn new(cfg: &ScenarioConfig, rng: &mut SimRng) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let n = cfg.nodes;
        let mut topo_rng = fork(rng, 1);
        let mut key_rng = fork(rng, 2);
        let net_rng = fork(rng, 3);
        let gossip_rng = fork(rng, 5);
        let topology = build_random_topology(n, cfg.arena_m, cfg.transmission_range_m, cfg.interference_range_m, &mut topo_rng)
            .map_err(HarnessError::Sim)?;
        let quorum = QuorumConfig::new(n, cfg.quorum_rule).map_err(HarnessError::Consensus)?;
        let timeout = cfg.effective_timeout(&topology);
        let (keys, validators) = cluster_keys(n, &mut key_rng);
        let chain = Chain::new(validators.clone(), cfg.quorum_rule).map_err(HarnessError::Ledger)?;
        let replica_cfg = ReplicaConfig { timeout, max_backoff_doublings: cfg.max_backoff_doublings, ..ReplicaConfig::default() };
        let nodes = keys
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let id = NodeId::from(i);
                Node {
                    replica: Replica::new(id, k.clone(), validators.clone(), quorum, replica_cfg),
                    app: NodeApp { id, chain: chain.clone(), mempool: BTreeMap::new(), max_block_txs: cfg.max_block_txs, divergences: 0 },
                    armed: None,
                }
            })
            .collect();
        let faults = FaultTable::from_specs(n, cfg.faults.clone()).map_err(HarnessError::Sim)?;
        let byzantine = faults.byzantine_nodes();
        let store = ContentStore::new(cfg.store, n).map_err(HarnessError::Store)?;
        let diameter = topology.diameter();
        let mean_hops = topology.mean_hops();
        let mut cluster = Cluster {
            cfg: cfg.clone(),
            quorum,
            timeout,
            queue: EventQueue::new(),
            net: Network::new(topology, cfg.link.model()),
            nodes,
            faults,
            byzantine,
            store,
            records: Vec::new(),
            observer: chain,
            net_rng,
            gossip_rng,
            trace: Vec::new(),
            submitted: BTreeMap::new(),
            committed: BTreeSet::new(),
            first_view: BTreeMap::new(),
            proposals: BTreeSet::new(),
            proposal_views: BTreeSet::new(),
            decided: BTreeMap::new(),
            max_installed_view: 0,
            commit_log: Vec::new(),
            newly_committed: Vec::new(),
            last_progress: SimTime::ZERO,
            periodic_until: SimTime::ZERO,
            store_bytes: 0,
            checks: LiveChecks::default(),
            stalled: false,
        };
        cluster.log(TraceKind::RunStart {
            nodes: n,
            max_faults: quorum.max_faults,
            quorum: quorum.quorum,
            timeout_us: timeout.micros(),
            diameter,
            mean_hops,
        });
        for (i, spec) in cluster.faults.specs().iter().enumerate() {
            cluster.queue.schedule(spec.start(), Event::FaultStart(i));
            if let Some(end) = spec.end() {
                cluster.queue.schedule(end, Event::FaultEnd(i));
            }
        }
        Ok(cluster)
    }

    /// Starts every node from `chain`, e.g. a ledger loaded from disk. The
    /// chain must have been produced by a cluster with the same seed.
    pub fn restore(&mut self, chain: Chain) -> Result<(), HarnessError> {
        if chain.params() != self.observer.params() {
            return Err(HarnessError::Config("chain was produced by a different validator set"));
        }
        if let Some(entry) = chain.entries().last().filter(|e| e.block.height() > 0) {
            let cert = entry.certificate.clone().ok_or(HarnessError::Config("chain tip has no certificate"))?;
            for node in &mut self.nodes {
                node.replica.resume(entry.block.clone(), cert.clone());
                node.app.chain = chain.clone();
            }
        }
        for e in chain.entries().iter().skip(1) {
            self.decided.insert(e.block.height(), e.block.digest());
        }
        let tip_time = SimTime(chain.tip().header.timestamp_us);
        self.observer = chain;
        self.advance_clock(tip_time);
        Ok(())
    }

    /// Moves simulated time forward without processing events, so a
    /// restored cluster never stamps anything earlier than its ledger.
    pub fn advance_clock(&mut self, to: SimTime) {
        self.queue.advance_to(to);
        self.last_progress = self.last_progress.max(self.queue.now());
    }

    /// Schedules gossip rounds and availability samples until `until`.
    pub fn start_periodic(&mut self, until: SimTime) {
        self.periodic_until = until;
        let now = self.now();
        self.queue.schedule(now + self.gossip_interval(), Event::Gossip);
        self.queue.schedule(now + self.sample_interval(), Event::Sample);
    }

    fn gossip_interval(&self) -> SimDuration {
        SimDuration::from_millis_f64(self.cfg.gossip_interval_ms)
    }

    fn sample_interval(&self) -> SimDuration {
        SimDuration::from_millis_f64(self.cfg.sample_interval_s * 1000.0)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn quorum(&self) -> &QuorumConfig {
        &self.quorum
    }

    pub fn timeout(&self) -> SimDuration {
        self.timeout
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn faults(&self) -> &FaultTable {
        &self.faults
    }

    /// Committed ledger as seen by clients: each block appended when the
    /// first honest replica commits it.
    pub fn observer(&self) -> &Chain {
        &self.observer
    }

    pub fn replica(&self, node: NodeId) -> &Replica<Block> {
        &self.nodes[node.index()].replica
    }

    pub fn node_chain(&self, node: NodeId) -> &Chain {
        &self.nodes[node.index()].app.chain
    }

    pub fn store(&self) -> &ContentStore {
        &self.store
    }

    pub fn records(&self) -> &[ContentAddress] {
        &self.records
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn commit_log(&self) -> &[CommitRecord] {
        &self.commit_log
    }

    pub fn checks(&self) -> LiveChecks {
        let mut c = self.checks;
        c.divergences += self.nodes.iter().map(|n| n.app.divergences).sum::<u64>();
        c
    }

    pub fn is_stalled(&self) -> bool {
        self.stalled
    }

    pub fn is_honest(&self, node: NodeId) -> bool {
        !self.byzantine.contains(&node)
    }

    /// Submitted transactions not yet committed.
    pub fn pending(&self) -> usize {
        self.submitted.len() - self.committed.len()
    }

    pub fn is_committed(&self, tx: &Digest) -> bool {
        self.committed.contains(tx)
    }

    /// Transactions committed since the last call.
    pub fn take_committed(&mut self) -> Vec<Digest> {
        core::mem::take(&mut self.newly_committed)
    }

    /// First live node at or after `preferred`, cyclically.
    pub fn live_node_from(&self, preferred: usize) -> Option<NodeId> {
        let n = self.nodes.len();
        (0..n).map(|k| NodeId::from((preferred + k) % n)).find(|id| self.net.is_alive(*id))
    }

    pub fn log(&mut self, kind: TraceKind) {
        self.trace.push(TraceEvent { t_us: self.now().micros(), kind });
    }

    pub fn schedule_client(&mut self, at: SimTime) {
        self.queue.schedule(at, Event::Client);
    }

    /// Stores `data` at `node` and tracks it for availability sampling.
    pub fn store_put(&mut self, data: &[u8], node: NodeId) -> Result<ContentAddress, StoreError> {
        let addr = self.store.put(data, node)?;
        if !self.records.contains(&addr) {
            self.records.push(addr);
        }
        Ok(addr)
    }

    pub fn store_get(&mut self, root: &ContentAddress, node: NodeId) -> Result<Retrieved, StoreError> {
        let got = self.store.get(root, node);
        if let Ok(r) = &got {
            self.store_bytes += r.transfers.iter().map(|t| t.bytes as u64).sum::<u64>();
        }
        got
    }

    /// Hands `tx` to `via`, which relays it to every other replica.
    pub fn submit(&mut self, tx: RecordTransaction, via: NodeId) {
        let now = self.now();
        if self.pending() == 0 {
            self.last_progress = now;
        }
        self.log(TraceKind::Submit { tx: tx.id, actor: tx.actor().into(), action: tx.action(), via });
        self.submitted.insert(tx.id, Submitted { at: now });
        let bytes = tx.encoded_len();
        for i in 0..self.nodes.len() {
            let to = NodeId::from(i);
            if to == via {
                continue;
            }
            if let SendOutcome::Scheduled { deliver_at, .. } = self.net.send(via, to, bytes, now, &mut self.net_rng) {
                self.queue.schedule(deliver_at, Event::Deliver { to, wire: Wire::Tx(Box::new(tx.clone())) });
            }
        }
        if self.net.is_alive(via) {
            let node = &mut self.nodes[via.index()];
            node.app.offer(tx);
            let out = node.replica.tick(now, &mut node.app);
            self.dispatch(via, out);
        }
    }

    /// Processes events up to `limit`, handing control back on client
    /// events and stalls.
    pub fn step_until(&mut self, limit: SimTime) -> Step {
        loop {
            match self.queue.peek_time() {
                None => return Step::Idle,
                Some(t) if t > limit => return Step::Limit,
                Some(_) => {}
            }
            let Some((_, event)) = self.queue.pop() else { return Step::Idle };
            if let Event::Client = event {
                return Step::Client;
            }
            self.handle(event);
            if self.check_stall() {
                return Step::Stalled;
            }
        }
    }

    /// Runs until nothing is pending, dropping client events. Returns false
    /// on a stall or when `limit` passes first.
    pub fn settle(&mut self, limit: SimTime) -> bool {
        while self.pending() > 0 {
            match self.queue.peek_time() {
                Some(t) if t <= limit => {}
                _ => return false,
            }
            let Some((_, event)) = self.queue.pop() else { return false };
            self.handle(event);
            if self.check_stall() {
                return false;
            }
        }
        true
    }

    fn check_stall(&mut self) -> bool {
        if self.stalled {
            return true;
        }
        let horizon = SimDuration::from_millis_f64(self.cfg.stall_horizon_s * 1000.0);
        if self.pending() > 0 && self.now().saturating_since(self.last_progress) > horizon {
            self.stalled = true;
            let pending = self.pending();
            self.log(TraceKind::Stall { pending });
            return true;
        }
        false
    }

    fn handle(&mut self, event: Event) {
        let now = self.now();
        match event {
            Event::Deliver { to, wire } => {
                if !self.net.on_arrival(to) {
                    return;
                }
                let node = &mut self.nodes[to.index()];
                let out = match wire {
                    Wire::Tx(tx) => {
                        node.app.offer(*tx);
                        node.replica.tick(now, &mut node.app)
                    }
                    Wire::Consensus(msg) => node.replica.handle_message(*msg, now, &mut node.app),
                };
                self.dispatch(to, out);
            }
            Event::Timer { node, at } => {
                let n = &mut self.nodes[node.index()];
                if n.armed == Some(at) {
                    n.armed = None;
                }
                if !self.net.is_alive(node) || n.replica.deadline() != Some(at) {
                    return;
                }
                let out = n.replica.on_timeout(now, &mut n.app);
                self.dispatch(node, out);
            }
            Event::Client => {}
            Event::Gossip => {
                let transfers = self.store.gossip_round(self.net.topology(), &mut self.gossip_rng);
                if !transfers.is_empty() {
                    let bytes = transfers.iter().map(|t| t.bytes as u64).sum();
                    let rejected = transfers.iter().filter(|t| !t.accepted).count();
                    self.log(TraceKind::Gossip { transfers: transfers.len(), rejected, bytes });
                }
                if now + self.gossip_interval() <= self.periodic_until {
                    self.queue.schedule(now + self.gossip_interval(), Event::Gossip);
                }
            }
            Event::Sample => {
                self.sample_availability();
                if now + self.sample_interval() <= self.periodic_until {
                    self.queue.schedule(now + self.sample_interval(), Event::Sample);
                }
            }
            Event::FaultStart(i) => {
                let spec = self.faults.specs()[i].clone();
                self.log(TraceKind::Fault { node: spec.node, fault: spec.behavior.clone() });
                match &spec.behavior {
                    FaultBehavior::Crash => {
                        self.net.kill(spec.node);
                        self.store.on_node_death(spec.node);
                    }
                    FaultBehavior::Partition { group } => self.net.set_partition(group),
                    FaultBehavior::CorruptStorage => self.store.set_corrupt(spec.node, true),
                    _ => {}
                }
            }
            Event::FaultEnd(i) => {
                let spec = self.faults.specs()[i].clone();
                self.log(TraceKind::FaultCleared { node: spec.node });
                match &spec.behavior {
                    FaultBehavior::Partition { .. } => self.net.clear_partition(),
                    FaultBehavior::CorruptStorage => self.store.set_corrupt(spec.node, false),
                    _ => {}
                }
            }
        }
    }

    pub fn sample_availability(&mut self) {
        let records = self.records.len();
        let sum: f64 = self.records.iter().map(|r| self.store.current_availability(r).unwrap_or(0.0)).sum();
        let mean = if records == 0 { 0.0 } else { sum / records as f64 };
        self.log(TraceKind::Availability { records, mean });
    }

    /// Applies fault behavior to `out` and puts the survivors on the wire.
    fn dispatch(&mut self, from: NodeId, out: Output<Block>) {
        let now = self.now();
        self.observe_commits(from, out.committed, now);
        let replica = &self.nodes[from.index()].replica;
        if replica.status() == Status::Normal && replica.view() > self.max_installed_view && self.is_honest(from) {
            self.max_installed_view = replica.view();
        }
        let silent = self.faults.is_silent(from, now);
        let equivocate = self.faults.equivocates(from, now);
        let delay = self.faults.extra_delay(from, now);
        if !silent {
            for (target, msg) in out.messages {
                self.observe_outbound(from, &msg);
                match target {
                    Target::One(to) => self.send(from, to, msg, delay),
                    Target::All => {
                        let alt = if equivocate { self.twist(from, &msg) } else { None };
                        if let Some(a) = &alt {
                            self.observe_outbound(from, a);
                        }
                        for i in 0..self.nodes.len() {
                            let to = NodeId::from(i);
                            if to == from {
                                continue;
                            }
                            let m = match &alt {
                                Some(a) if i % 2 == 1 => a.clone(),
                                _ => msg.clone(),
                            };
                            self.send(from, to, m, delay);
                        }
                    }
                }
            }
        }
        self.arm_timer(from);
    }

    /// The conflicting twin an equivocating node shows odd-numbered peers.
    fn twist(&self, from: NodeId, msg: &Message<Block>) -> Option<Message<Block>> {
        let keys: &KeyPair = self.nodes[from.index()].replica.keys();
        match &msg.payload {
            Payload::PrePrepare(block) => {
                let mut alt = block.clone();
                alt.header.timestamp_us += 1;
                Some(Message::sign(msg.view, msg.seq, Digest::ZERO, Payload::PrePrepare(alt), keys, from))
            }
            Payload::Prepare | Payload::Commit => {
                let d = Digest::of(msg.digest.as_bytes());
                Some(Message::sign(msg.view, msg.seq, d, msg.payload.clone(), keys, from))
            }
            _ => None,
        }
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: Message<Block>, delay: SimDuration) {
        let now = self.now();
        let bytes = msg.encoded_len();
        if let SendOutcome::Scheduled { deliver_at, .. } = self.net.send(from, to, bytes, now, &mut self.net_rng) {
            self.queue.schedule(deliver_at + delay, Event::Deliver { to, wire: Wire::Consensus(Box::new(msg)) });
        }
    }

    fn arm_timer(&mut self, node: NodeId) {
        let n = &mut self.nodes[node.index()];
        if let Some(d) = n.replica.deadline() {
            if n.armed != Some(d) {
                n.armed = Some(d);
                self.queue.schedule(d, Event::Timer { node, at: d });
            }
        }
    }

    fn observe_outbound(&mut self, from: NodeId, msg: &Message<Block>) {
        match (&msg.payload, msg.kind()) {
            (Payload::PrePrepare(block), _) => {
                if self.proposals.insert((msg.seq, msg.digest)) {
                    self.proposal_views.insert(msg.view);
                    for tx in &block.transactions {
                        self.first_view.entry(tx.id).or_insert(msg.view);
                    }
                    self.log(TraceKind::Proposal {
                        node: from,
                        view: msg.view,
                        seq: msg.seq,
                        digest: msg.digest,
                        txs: block.transactions.len(),
                    });
                }
            }
            (_, MessageKind::ViewChange) => self.log(TraceKind::ViewChange { node: from, view: msg.view }),
            (_, MessageKind::NewView) => self.log(TraceKind::NewView { node: from, view: msg.view }),
            _ => {}
        }
    }

    fn observe_commits(&mut self, node: NodeId, committed: Vec<Committed<Block>>, now: SimTime) {
        for c in committed {
            if let Some(b) = &c.breakdown {
                self.checks.breakdowns_checked += 1;
                if !b.is_exact() {
                    self.checks.breakdown_mismatches += 1;
                }
            }
            if !self.is_honest(node) {
                continue;
            }
            match self.decided.get(&c.seq) {
                Some(d) if *d != c.digest => {
                    self.checks.safety_violations += 1;
                    self.log(TraceKind::SafetyViolation { seq: c.seq, node });
                }
                Some(_) => {}
                None => self.first_commit(node, c, now),
            }
        }
    }

    fn first_commit(&mut self, node: NodeId, c: Committed<Block>, now: SimTime) {
        self.decided.insert(c.seq, c.digest);
        self.last_progress = now;
        let b = c.breakdown.unwrap_or_default();
        let block = &c.proposal;
        let payload_bytes = block.transactions.iter().map(|t| t.encoded_len()).sum();
        self.log(TraceKind::Commit {
            seq: c.seq,
            view: c.view,
            digest: c.digest,
            node,
            txs: block.transactions.len(),
            payload_bytes,
            transferred: c.breakdown.is_none(),
            pre_prepare_us: b.pre_prepare_us,
            prepare_us: b.prepare_us,
            commit_us: b.commit_us,
            total_us: b.total_us,
        });
        self.commit_log.push(CommitRecord {
            seq: c.seq,
            view: c.view,
            digest: c.digest,
            proposer: block.header.proposer,
            committed_by: node,
            committed_at_us: now.micros(),
            txs: block.transactions.len(),
            pre_prepare_us: c.breakdown.map(|b| b.pre_prepare_us),
            prepare_us: c.breakdown.map(|b| b.prepare_us),
            commit_us: c.breakdown.map(|b| b.commit_us),
            total_us: c.breakdown.map(|b| b.total_us),
        });
        for tx in &block.transactions {
            let Some(sub) = self.submitted.get(&tx.id).copied() else { continue };
            if !self.committed.insert(tx.id) {
                continue;
            }
            self.newly_committed.push(tx.id);
            let proposed_view = self.first_view.get(&tx.id).copied().unwrap_or(c.view);
            self.log(TraceKind::TxCommitted {
                tx: tx.id,
                seq: c.seq,
                latency_us: now.saturating_since(sub.at).micros(),
                proposed_view,
                commit_view: c.view,
            });
        }
        if self.observer.apply_committed(c.proposal, c.certificate).is_err() {
            self.checks.divergences += 1;
        }
    }

    /// End-of-run checks: validates every honest live chain, compares it to
    /// the committed ledger, and logs views that never saw a proposal.
    pub fn finish(&mut self) {
        self.sample_availability();
        for i in 0..self.nodes.len() {
            let id = NodeId::from(i);
            if !self.is_honest(id) || !self.net.is_alive(id) {
                continue;
            }
            let chain = &self.nodes[i].app.chain;
            let valid = chain.validate_chain().is_ok();
            let height = chain.height();
            let prefix_ok =
                chain.entries().iter().all(|e| self.observer.block(e.block.height()).is_some_and(|b| b.digest() == e.block.digest()));
            if !prefix_ok {
                self.checks.safety_violations += 1;
                self.log(TraceKind::SafetyViolation { seq: height, node: id });
            }
            self.log(TraceKind::ChainCheck { node: id, height, valid });
        }
        let failed: Vec<u64> = (0..self.max_installed_view).filter(|v| !self.proposal_views.contains(v)).collect();
        for view in failed {
            self.log(TraceKind::FailedView { view });
        }
        let end_us = self.now().micros();
        let capacity_bytes_per_s = self.cfg.link_capacity_kbps * 1000.0 / 8.0;
        let network = self.net.counters();
        let store_bytes = self.store_bytes;
        self.log(TraceKind::RunEnd { end_us, capacity_bytes_per_s, nodes: self.nodes.len(), store_bytes, network });
    }
}
