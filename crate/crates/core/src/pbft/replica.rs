use alloc::collections::btree_map::Entry;
use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::message::{CommitCertificate, Message, Payload, PreparedCertificate, Proposal, ViewChangeBody};
use super::{ConsensusError, LatencyBreakdown, QuorumConfig};
use crate::hash::Digest;
use crate::keys::{KeyPair, NodeId, Signature, ValidatorSet};
use crate::time::{SimDuration, SimTime};

/// Most blocks sent in answer to one fetch request.
const MAX_FETCH_REPLY: u64 = 16;

/// The replicated state machine the replica drives.
pub trait Application<P> {
    /// Whether `proposal` may be committed at `seq` on top of everything
    /// executed so far.
    fn validate(&self, seq: u64, view: u64, proposal: &P) -> bool;
    /// Builds the next proposal when this replica is primary.
    fn build(&mut self, seq: u64, view: u64, now: SimTime) -> Option<P>;
    /// Work is waiting to be ordered; drives the view-change timer.
    fn has_pending(&self) -> bool;
    fn execute(&mut self, committed: &Committed<P>);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaConfig {
    /// How long pending work may go uncommitted before a view change.
    pub timeout: SimDuration,
    /// Cap on the exponential backoff of successive view changes.
    pub max_backoff_doublings: u32,
    pub max_buffered: usize,
}

impl Default for ReplicaConfig {
    fn default() -> Self {
        ReplicaConfig { timeout: SimDuration::from_millis(200), max_backoff_doublings: 5, max_buffered: 4096 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    PrePrepared,
    Prepared,
    Committed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Normal,
    ViewChange,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    All,
    One(NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Committed<P> {
    pub seq: u64,
    pub view: u64,
    pub digest: Digest,
    pub proposal: P,
    pub certificate: CommitCertificate,
    pub committed_at: SimTime,
    /// Absent for blocks obtained through state transfer.
    pub breakdown: Option<LatencyBreakdown>,
}

#[derive(Debug)]
pub struct Output<P> {
    pub messages: Vec<(Target, Message<P>)>,
    pub committed: Vec<Committed<P>>,
}

impl<P> Default for Output<P> {
    fn default() -> Self {
        Output { messages: Vec::new(), committed: Vec::new() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ReplicaStats {
    pub invalid_messages: u64,
    pub equivocations: u64,
    pub duplicates: u64,
    pub stale: u64,
    pub rejected_proposals: u64,
    pub proposals: u64,
    pub reproposals: u64,
    pub view_changes_started: u64,
    pub new_views_installed: u64,
    pub state_transfers: u64,
    pub fetches_sent: u64,
}

#[derive(Clone, Debug)]
struct Slot<P> {
    accepted: Option<Message<P>>,
    prepares: BTreeMap<NodeId, (Digest, Signature)>,
    commits: BTreeMap<NodeId, (Digest, Signature)>,
    phase: Phase,
    pre_prepared_at: SimTime,
    prepared_at: Option<SimTime>,
}

impl<P> Default for Slot<P> {
    fn default() -> Self {
        Slot {
            accepted: None,
            prepares: BTreeMap::new(),
            commits: BTreeMap::new(),
            phase: Phase::Idle,
            pre_prepared_at: SimTime::ZERO,
            prepared_at: None,
        }
    }
}

fn matching(votes: &BTreeMap<NodeId, (Digest, Signature)>, digest: &Digest) -> Vec<(NodeId, Signature)> {
    votes.iter().filter(|(_, (d, _))| d == digest).map(|(n, (_, s))| (*n, *s)).collect()
}

#[derive(Clone, Debug)]
pub struct Replica<P> {
    id: NodeId,
    keys: KeyPair,
    validators: ValidatorSet,
    quorum: QuorumConfig,
    config: ReplicaConfig,
    view: u64,
    status: Status,
    last_committed: u64,
    log: BTreeMap<(u64, u64), Slot<P>>,
    committed: BTreeMap<u64, (P, CommitCertificate)>,
    prepared: BTreeMap<u64, PreparedCertificate<P>>,
    view_changes: BTreeMap<u64, BTreeMap<NodeId, Message<P>>>,
    new_views_sent: BTreeSet<u64>,
    /// Highest sequence the installed new view proved committed somewhere.
    floor: u64,
    /// Proposal the current view must re-propose at the given sequence.
    mandate: Option<(u64, P)>,
    buffered: VecDeque<Message<P>>,
    transfers: BTreeMap<u64, (P, CommitCertificate)>,
    last_fetch: Option<SimTime>,
    deadline: Option<SimTime>,
    vc_attempts: u32,
    stats: ReplicaStats,
}

impl<P: Proposal> Replica<P> {
    pub fn new(id: NodeId, keys: KeyPair, validators: ValidatorSet, quorum: QuorumConfig, config: ReplicaConfig) -> Self {
        Replica {
            id,
            keys,
            validators,
            quorum,
            config,
            view: 0,
            status: Status::Normal,
            last_committed: 0,
            log: BTreeMap::new(),
            committed: BTreeMap::new(),
            prepared: BTreeMap::new(),
            view_changes: BTreeMap::new(),
            new_views_sent: BTreeSet::new(),
            floor: 0,
            mandate: None,
            buffered: VecDeque::new(),
            transfers: BTreeMap::new(),
            last_fetch: None,
            deadline: None,
            vc_attempts: 0,
            stats: ReplicaStats::default(),
        }
    }

    /// Continues from a prefix committed earlier, e.g. a chain loaded from
    /// disk, with `last` the proposal committed at the certificate's sequence.
    pub fn resume(&mut self, last: P, certificate: CommitCertificate) {
        self.view = self.view.max(certificate.view);
        self.last_committed = certificate.seq;
        self.floor = certificate.seq;
        self.committed.insert(certificate.seq, (last, certificate));
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn view(&self) -> u64 {
        self.view
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn last_committed(&self) -> u64 {
        self.last_committed
    }

    pub fn quorum(&self) -> &QuorumConfig {
        &self.quorum
    }

    pub fn stats(&self) -> &ReplicaStats {
        &self.stats
    }

    pub fn deadline(&self) -> Option<SimTime> {
        self.deadline
    }

    pub fn primary(&self) -> NodeId {
        self.quorum.primary(self.view)
    }

    pub fn is_primary(&self) -> bool {
        self.primary() == self.id && self.status == Status::Normal
    }

    pub fn phase(&self, view: u64, seq: u64) -> Phase {
        if self.committed.contains_key(&seq) {
            return Phase::Committed;
        }
        self.log.get(&(view, seq)).map_or(Phase::Idle, |s| s.phase)
    }

    pub fn committed_digest(&self, seq: u64) -> Option<Digest> {
        self.committed.get(&seq).map(|(_, c)| c.digest)
    }

    /// Digest of the protocol-relevant state, for state-space exploration.
    pub fn fingerprint(&self) -> Digest {
        let slots: Vec<_> =
            self.log.iter().map(|(k, s)| (k, s.accepted.as_ref().map(|m| m.digest), &s.prepares, &s.commits, s.phase)).collect();
        let committed: Vec<_> = self.committed.iter().map(|(s, (_, c))| (s, c.digest)).collect();
        let vcs: Vec<_> = self.view_changes.iter().map(|(v, m)| (v, m.keys().collect::<Vec<_>>())).collect();
        let text = format!(
            "{:?}|{:?}|{}|{:?}|{:?}|{:?}|{:?}|{}|{}",
            self.view,
            self.status,
            self.last_committed,
            slots,
            committed,
            self.prepared.keys().collect::<Vec<_>>(),
            vcs,
            self.floor,
            self.buffered.len()
        );
        Digest::of(text.as_bytes())
    }

    fn sign(&self, view: u64, seq: u64, digest: Digest, payload: Payload<P>) -> Message<P> {
        Message::sign(view, seq, digest, payload, &self.keys, self.id)
    }

    /// Primary entry point: pre-prepares `proposal` at `seq`.
    pub fn propose(&mut self, seq: u64, proposal: P, now: SimTime, app: &mut impl Application<P>) -> Result<Output<P>, ConsensusError> {
        if self.status != Status::Normal {
            return Err(ConsensusError::ViewChangeInProgress);
        }
        if self.primary() != self.id {
            return Err(ConsensusError::NotPrimary { view: self.view });
        }
        let expected = self.last_committed + 1;
        if seq != expected {
            return Err(ConsensusError::SequenceGap { expected, got: seq });
        }
        if self.log.get(&(self.view, seq)).is_some_and(|s| s.accepted.is_some()) {
            return Err(ConsensusError::AlreadyProposed(seq));
        }
        if !app.validate(seq, self.view, &proposal) {
            return Err(ConsensusError::InvalidProposal);
        }
        let mut out = Output::default();
        self.send_pre_prepare(seq, proposal, now, app, &mut out);
        self.settle(now, app, &mut out);
        Ok(out)
    }

    fn send_pre_prepare(&mut self, seq: u64, proposal: P, now: SimTime, app: &mut impl Application<P>, out: &mut Output<P>) {
        let msg = self.sign(self.view, seq, Digest::ZERO, Payload::PrePrepare(proposal));
        out.messages.push((Target::All, msg.clone()));
        self.on_normal(msg, now, app, out);
    }

    pub fn handle_message(&mut self, msg: Message<P>, now: SimTime, app: &mut impl Application<P>) -> Output<P> {
        let mut out = Output::default();
        if msg.sender.index() >= self.quorum.n_nodes || !msg.verify(&self.validators) {
            self.stats.invalid_messages += 1;
            return out;
        }
        match msg.payload {
            Payload::Fetch => self.on_fetch(&msg, &mut out),
            Payload::BlockReply(..) => self.on_block_reply(msg),
            Payload::ViewChange(_) => self.on_view_change(msg, now, app, &mut out),
            Payload::NewView(_) => self.on_new_view(msg, now, &mut out),
            _ => self.on_normal(msg, now, app, &mut out),
        }
        self.settle(now, app, &mut out);
        out
    }

    /// Re-checks proposing and timers, e.g. after new work arrived.
    pub fn tick(&mut self, now: SimTime, app: &mut impl Application<P>) -> Output<P> {
        let mut out = Output::default();
        self.settle(now, app, &mut out);
        out
    }

    pub fn on_timeout(&mut self, now: SimTime, app: &mut impl Application<P>) -> Output<P> {
        let mut out = Output::default();
        match self.deadline {
            Some(d) if now >= d => {}
            _ => return out,
        }
        self.deadline = None;
        match self.status {
            Status::Normal if !self.busy(app) => {}
            _ => self.start_view_change(self.view + 1, now, app, &mut out),
        }
        self.settle(now, app, &mut out);
        out
    }

    fn busy(&self, app: &impl Application<P>) -> bool {
        app.has_pending()
            || self.last_committed < self.floor
            || self.log.get(&(self.view, self.last_committed + 1)).is_some_and(|s| s.accepted.is_some())
    }

    fn settle(&mut self, now: SimTime, app: &mut impl Application<P>, out: &mut Output<P>) {
        loop {
            let before = (self.last_committed, self.view, self.status, self.buffered.len());
            self.apply_transfers(now, app, out);
            self.drain_buffer(now, app, out);
            self.try_propose(now, app, out);
            if before == (self.last_committed, self.view, self.status, self.buffered.len()) {
                break;
            }
        }
        if self.status == Status::Normal {
            if self.busy(app) {
                if self.deadline.is_none() {
                    self.deadline = Some(now + self.config.timeout);
                }
            } else {
                self.deadline = None;
            }
        }
    }

    fn buffer(&mut self, msg: Message<P>) {
        if self.buffered.len() >= self.config.max_buffered {
            self.buffered.pop_front();
            self.stats.stale += 1;
        }
        self.buffered.push_back(msg);
    }

    fn drain_buffer(&mut self, now: SimTime, app: &mut impl Application<P>, out: &mut Output<P>) {
        if self.status != Status::Normal {
            return;
        }
        let next = self.last_committed + 1;
        let view = self.view;
        let (ready, keep): (VecDeque<_>, VecDeque<_>) =
            core::mem::take(&mut self.buffered).into_iter().partition(|m| m.view <= view && m.seq <= next);
        self.buffered = keep;
        for msg in ready {
            self.on_normal(msg, now, app, out);
        }
    }

    fn maybe_fetch(&mut self, from: NodeId, now: SimTime, force: bool, out: &mut Output<P>) {
        if from == self.id {
            return;
        }
        let due = self.last_fetch.map_or(true, |t| now >= t + SimDuration(self.config.timeout.micros() / 2));
        if force || due {
            self.last_fetch = Some(now);
            self.stats.fetches_sent += 1;
            let msg = self.sign(self.view, self.last_committed + 1, Digest::ZERO, Payload::Fetch);
            out.messages.push((Target::One(from), msg));
        }
    }

    fn on_normal(&mut self, msg: Message<P>, now: SimTime, app: &mut impl Application<P>, out: &mut Output<P>) {
        if msg.view < self.view {
            self.stats.stale += 1;
            return;
        }
        if msg.seq <= self.last_committed {
            self.stats.stale += 1;
            return;
        }
        if msg.view > self.view || self.status != Status::Normal {
            self.buffer(msg);
            return;
        }
        if msg.seq > self.last_committed + 1 {
            let sender = msg.sender;
            self.buffer(msg);
            self.maybe_fetch(sender, now, false, out);
            return;
        }
        let (view, seq) = (msg.view, msg.seq);
        match &msg.payload {
            Payload::PrePrepare(p) => {
                let p = p.clone();
                if !self.accept_pre_prepare(msg, p, now, app, out) {
                    return;
                }
            }
            Payload::Prepare => self.record_vote(msg, false),
            Payload::Commit => self.record_vote(msg, true),
            _ => {}
        }
        self.check_progress(view, seq, now, app, out);
    }

    fn accept_pre_prepare(
        &mut self,
        msg: Message<P>,
        proposal: P,
        now: SimTime,
        app: &mut impl Application<P>,
        out: &mut Output<P>,
    ) -> bool {
        if msg.sender != self.quorum.primary(msg.view) {
            self.stats.invalid_messages += 1;
            return false;
        }
        let slot = self.log.entry((msg.view, msg.seq)).or_default();
        if let Some(existing) = &slot.accepted {
            if existing.digest == msg.digest {
                self.stats.duplicates += 1;
            } else {
                self.stats.equivocations += 1;
            }
            return false;
        }
        if let Some((seq, mandated)) = &self.mandate {
            if *seq == msg.seq && mandated.digest() != msg.digest {
                self.stats.rejected_proposals += 1;
                return false;
            }
        }
        if !app.validate(msg.seq, msg.view, &proposal) {
            self.stats.rejected_proposals += 1;
            return false;
        }
        let (view, seq, digest) = (msg.view, msg.seq, msg.digest);
        let slot = self.log.entry((view, seq)).or_default();
        slot.accepted = Some(msg);
        slot.phase = Phase::PrePrepared;
        slot.pre_prepared_at = now;
        let prepare = self.sign(view, seq, digest, Payload::Prepare);
        out.messages.push((Target::All, prepare.clone()));
        self.record_vote(prepare, false);
        true
    }

    fn record_vote(&mut self, msg: Message<P>, commit: bool) {
        let slot = self.log.entry((msg.view, msg.seq)).or_default();
        let votes = if commit { &mut slot.commits } else { &mut slot.prepares };
        match votes.get(&msg.sender) {
            Some((d, _)) if *d == msg.digest => self.stats.duplicates += 1,
            Some(_) => self.stats.equivocations += 1,
            None => {
                votes.insert(msg.sender, (msg.digest, msg.signature));
            }
        }
    }

    fn check_progress(&mut self, view: u64, seq: u64, now: SimTime, app: &mut impl Application<P>, out: &mut Output<P>) {
        let quorum = self.quorum.quorum;
        let Some(slot) = self.log.get_mut(&(view, seq)) else { return };
        let Some(pp) = slot.accepted.clone() else { return };
        let digest = pp.digest;
        if slot.phase == Phase::PrePrepared {
            let prepares = matching(&slot.prepares, &digest);
            if prepares.len() >= quorum {
                slot.phase = Phase::Prepared;
                slot.prepared_at = Some(now);
                let cert = PreparedCertificate { pre_prepare: pp.clone(), prepares };
                self.prepared.insert(seq, cert);
                let commit = self.sign(view, seq, digest, Payload::Commit);
                out.messages.push((Target::All, commit.clone()));
                self.record_vote(commit, true);
            }
        }
        let Some(slot) = self.log.get_mut(&(view, seq)) else { return };
        if slot.phase < Phase::Committed {
            let commits = matching(&slot.commits, &digest);
            if commits.len() >= quorum {
                slot.phase = Phase::Committed;
                let prepared_at = slot.prepared_at.unwrap_or(now);
                let breakdown = match &pp.payload {
                    Payload::PrePrepare(p) => LatencyBreakdown::from_stamps(p.timestamp(), slot.pre_prepared_at, prepared_at, now),
                    _ => return,
                };
                let Payload::PrePrepare(proposal) = pp.payload else { return };
                let certificate = CommitCertificate { view, seq, digest, votes: commits };
                self.finalize(proposal, certificate, now, Some(breakdown), app, out);
            }
        }
    }

    fn finalize(
        &mut self,
        proposal: P,
        certificate: CommitCertificate,
        now: SimTime,
        breakdown: Option<LatencyBreakdown>,
        app: &mut impl Application<P>,
        out: &mut Output<P>,
    ) {
        let committed = Committed {
            seq: certificate.seq,
            view: certificate.view,
            digest: certificate.digest,
            proposal,
            certificate,
            committed_at: now,
            breakdown,
        };
        app.execute(&committed);
        self.last_committed = committed.seq;
        self.committed.insert(committed.seq, (committed.proposal.clone(), committed.certificate.clone()));
        if self.mandate.as_ref().is_some_and(|(s, _)| *s <= self.last_committed) {
            self.mandate = None;
        }
        self.transfers = self.transfers.split_off(&(self.last_committed + 1));
        self.deadline = None;
        self.vc_attempts = 0;
        out.committed.push(committed);
    }

    fn try_propose(&mut self, now: SimTime, app: &mut impl Application<P>, out: &mut Output<P>) {
        if !self.is_primary() {
            return;
        }
        let seq = self.last_committed + 1;
        if seq <= self.floor || self.log.get(&(self.view, seq)).is_some_and(|s| s.accepted.is_some()) {
            return;
        }
        let proposal = match &self.mandate {
            Some((s, p)) if *s == seq => {
                self.stats.reproposals += 1;
                Some(p.clone())
            }
            _ if app.has_pending() => {
                let p = app.build(seq, self.view, now);
                if p.is_some() {
                    self.stats.proposals += 1;
                }
                p
            }
            _ => None,
        };
        if let Some(p) = proposal {
            self.send_pre_prepare(seq, p, now, app, out);
        }
    }

    fn on_fetch(&mut self, msg: &Message<P>, out: &mut Output<P>) {
        let from = msg.seq.max(1);
        let to = self.last_committed.min(from + MAX_FETCH_REPLY - 1);
        for seq in from..=to {
            if let Some((p, cert)) = self.committed.get(&seq) {
                let reply = self.sign(cert.view, seq, cert.digest, Payload::BlockReply(p.clone(), cert.clone()));
                out.messages.push((Target::One(msg.sender), reply));
            }
        }
    }

    fn on_block_reply(&mut self, msg: Message<P>) {
        let Payload::BlockReply(p, cert) = msg.payload else { return };
        if msg.seq <= self.last_committed || self.transfers.contains_key(&msg.seq) {
            self.stats.duplicates += 1;
            return;
        }
        if cert.seq != msg.seq || cert.digest != p.digest() || !cert.verify(&self.validators, &self.quorum) {
            self.stats.invalid_messages += 1;
            return;
        }
        self.transfers.insert(msg.seq, (p, cert));
    }

    fn apply_transfers(&mut self, now: SimTime, app: &mut impl Application<P>, out: &mut Output<P>) {
        while let Some((p, cert)) = self.transfers.remove(&(self.last_committed + 1)) {
            if !app.validate(cert.seq, cert.view, &p) {
                self.stats.rejected_proposals += 1;
                break;
            }
            self.stats.state_transfers += 1;
            self.finalize(p, cert, now, None, app, out);
        }
    }

    fn view_change_body_valid(&self, body: &ViewChangeBody<P>) -> bool {
        let cert_ok = match &body.commit_certificate {
            Some(c) => c.seq == body.last_committed && c.verify(&self.validators, &self.quorum),
            None => body.last_committed == 0,
        };
        cert_ok && body.prepared.iter().all(|c| c.verify(&self.validators, &self.quorum))
    }

    fn start_view_change(&mut self, new_view: u64, now: SimTime, app: &mut impl Application<P>, out: &mut Output<P>) {
        if new_view <= self.view && self.status == Status::ViewChange {
            return;
        }
        self.view = new_view;
        self.status = Status::ViewChange;
        self.vc_attempts += 1;
        self.stats.view_changes_started += 1;
        let doublings = (self.vc_attempts - 1).min(self.config.max_backoff_doublings);
        self.deadline = Some(now + self.config.timeout.saturating_mul(1 << doublings));
        let body = ViewChangeBody {
            last_committed: self.last_committed,
            commit_certificate: self.committed.get(&self.last_committed).map(|(_, c)| c.clone()),
            prepared: self.prepared.range(self.last_committed + 1..).map(|(_, c)| c.clone()).collect(),
        };
        let msg = self.sign(new_view, self.last_committed, Digest::ZERO, Payload::ViewChange(body));
        out.messages.push((Target::All, msg.clone()));
        self.view_changes.entry(new_view).or_default().insert(self.id, msg);
        self.check_new_view_quorum(new_view, now, app, out);
    }

    fn on_view_change(&mut self, msg: Message<P>, now: SimTime, app: &mut impl Application<P>, out: &mut Output<P>) {
        let Payload::ViewChange(body) = &msg.payload else { return };
        if msg.seq != body.last_committed || !self.view_change_body_valid(body) {
            self.stats.invalid_messages += 1;
            return;
        }
        let installed = self.status == Status::Normal && msg.view <= self.view;
        if installed || msg.view < self.view {
            self.stats.stale += 1;
            return;
        }
        if body.last_committed > self.last_committed {
            self.maybe_fetch(msg.sender, now, false, out);
        }
        let (view, sender) = (msg.view, msg.sender);
        let entry = self.view_changes.entry(view).or_default();
        match entry.entry(sender) {
            Entry::Occupied(_) => self.stats.duplicates += 1,
            Entry::Vacant(slot) => {
                slot.insert(msg);
            }
        }
        // join once enough nodes want a view beyond ours that one is honest
        let floor_view = self.view + u64::from(self.status == Status::ViewChange);
        let mut senders = BTreeSet::new();
        let mut lowest = None;
        for (v, msgs) in self.view_changes.range(floor_view.max(self.view + 1)..) {
            senders.extend(msgs.keys().copied());
            lowest.get_or_insert(*v);
        }
        if senders.len() >= self.quorum.weak_quorum() {
            if let Some(v) = lowest {
                if self.status == Status::Normal || v > self.view {
                    self.start_view_change(v, now, app, out);
                }
            }
        }
        self.check_new_view_quorum(view, now, app, out);
    }

    fn check_new_view_quorum(&mut self, view: u64, now: SimTime, _app: &mut impl Application<P>, out: &mut Output<P>) {
        if self.status != Status::ViewChange
            || self.view != view
            || self.quorum.primary(view) != self.id
            || self.new_views_sent.contains(&view)
        {
            return;
        }
        let Some(vcs) = self.view_changes.get(&view) else { return };
        if vcs.len() < self.quorum.quorum {
            return;
        }
        let chosen: Vec<Message<P>> = vcs.values().take(self.quorum.quorum).cloned().collect();
        self.new_views_sent.insert(view);
        let msg = self.sign(view, 0, Digest::ZERO, Payload::NewView(chosen));
        out.messages.push((Target::All, msg.clone()));
        self.on_new_view(msg, now, out);
    }

    fn on_new_view(&mut self, msg: Message<P>, now: SimTime, out: &mut Output<P>) {
        if msg.view < self.view || (msg.view == self.view && self.status == Status::Normal) {
            self.stats.stale += 1;
            return;
        }
        let Payload::NewView(vcs) = &msg.payload else { return };
        let mut senders = BTreeSet::new();
        let valid_vcs = msg.sender == self.quorum.primary(msg.view)
            && vcs.iter().all(|vc| {
                matches!(&vc.payload, Payload::ViewChange(body)
                    if vc.view == msg.view
                        && vc.seq == body.last_committed
                        && senders.insert(vc.sender)
                        && vc.verify(&self.validators)
                        && self.view_change_body_valid(body))
            })
            && senders.len() >= self.quorum.quorum;
        if !valid_vcs {
            self.stats.invalid_messages += 1;
            return;
        }
        let mut floor = 0;
        let mut ahead = msg.sender;
        for vc in vcs {
            if let Payload::ViewChange(body) = &vc.payload {
                if body.last_committed > floor {
                    floor = body.last_committed;
                    ahead = vc.sender;
                }
            }
        }
        let mut best: Option<&PreparedCertificate<P>> = None;
        for vc in vcs {
            if let Payload::ViewChange(body) = &vc.payload {
                for cert in body.prepared.iter().filter(|c| c.seq() == floor + 1) {
                    if best.map_or(true, |b| cert.view() > b.view()) {
                        best = Some(cert);
                    }
                }
            }
        }
        self.mandate = best.and_then(|c| c.proposal().cloned()).map(|p| (floor + 1, p));
        self.floor = floor;
        self.view = msg.view;
        self.status = Status::Normal;
        self.deadline = None;
        self.stats.new_views_installed += 1;
        if self.last_committed < floor {
            self.maybe_fetch(ahead, now, true, out);
        }
    }
}
