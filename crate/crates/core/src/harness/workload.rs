use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::cluster::Cluster;
use super::config::{ScenarioConfig, WorkloadConfig};
use super::trace::{ReadOutcome, TraceKind};
use crate::crypto::{open, seal, KdfCost, SealedEnvelope};
use crate::hash::Digest;
use crate::identity::{totp_code, AuthSession, IdentityConfig, IdentityError, Registry, RequestedAction};
use crate::keys::{KeyPair, NodeId};
use crate::ledger::{AccessScope, LedgerState, Role, TxDraft};
use crate::rng::{exponential, fork, SimRng};
use crate::store::{ContentAddress, StoreError};
use crate::time::{SimDuration, SimTime};

/// Monotonic wall clock for the optional crypto timings.
pub trait WallClock {
    fn now_ns(&self) -> u64;
}

#[derive(Debug)]
struct SimUser {
    id: String,
    role: Role,
    password: Vec<u8>,
    keys: Option<KeyPair>,
    registered: bool,
    pending: Option<Digest>,
}

#[derive(Clone, Copy, Debug)]
struct RecordInfo {
    owner: usize,
    address: ContentAddress,
    plaintext: Digest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Op {
    Store,
    Grant,
    Revoke,
    Read,
    Probe,
}

/// Synthetic EHR traffic: patients store sealed records, grant and revoke
/// access; patients and granted doctors read records back.
///
/// Every transaction is valid against the committed ledger when submitted,
/// and each user has at most one transaction in flight, so a transaction
/// can only fail to commit through the consensus layer.
pub struct Workload {
    cfg: WorkloadConfig,
    kdf: KdfCost,
    spacing: SimDuration,
    rng: SimRng,
    /// Arrival gaps and operation kinds, drawn apart from `rng` so the
    /// offered load for a seed does not depend on how consensus behaves.
    arrivals: SimRng,
    registry: Registry,
    users: Vec<SimUser>,
    records: Vec<RecordInfo>,
    pending: BTreeMap<Digest, usize>,
    next_registration: usize,
    stop_at: SimTime,
    seal_ns: Vec<u64>,
    open_ns: Vec<u64>,
}

impl Workload {
    pub fn new(cfg: &ScenarioConfig, mut rng: SimRng) -> Self {
        let arrivals = fork(&mut rng, 1);
        let w = cfg.workload;
        let users = (0..w.patients)
            .map(|i| (format!("patient-{i:02}"), Role::Patient))
            .chain((0..w.doctors).map(|i| (format!("doctor-{i:02}"), Role::Doctor)))
            .map(|(id, role)| SimUser { password: format!("pw:{id}").into_bytes(), id, role, keys: None, registered: false, pending: None })
            .collect();
        Workload {
            cfg: w,
            kdf: cfg.kdf,
            spacing: SimDuration::from_millis_f64(w.register_spacing_ms),
            rng,
            arrivals,
            registry: Registry::new(IdentityConfig { password_cost: cfg.kdf, ..IdentityConfig::default() }),
            users,
            records: Vec::new(),
            pending: BTreeMap::new(),
            next_registration: 0,
            stop_at: SimTime(SimDuration::from_millis_f64(cfg.duration_s * 1000.0).micros()),
            seal_ns: Vec::new(),
            open_ns: Vec::new(),
        }
    }

    pub fn start(&mut self, cluster: &mut Cluster) {
        if !self.users.is_empty() {
            cluster.schedule_client(cluster.now());
        }
    }

    /// Mean wall-clock seal and open times in ms, if any were measured.
    pub fn crypto_times(&self) -> (Option<f64>, Option<f64>) {
        let mean = |xs: &[u64]| (!xs.is_empty()).then(|| xs.iter().sum::<u64>() as f64 / xs.len() as f64 / 1e6);
        (mean(&self.seal_ns), mean(&self.open_ns))
    }

    /// Releases users whose transactions committed.
    pub fn absorb(&mut self, committed: Vec<Digest>) {
        for tx in committed {
            if let Some(u) = self.pending.remove(&tx) {
                let user = &mut self.users[u];
                user.pending = None;
                user.registered = true;
            }
        }
    }

    pub fn on_client(&mut self, cluster: &mut Cluster, clock: Option<&dyn WallClock>) {
        let now = cluster.now();
        if self.next_registration < self.users.len() {
            self.register_next(cluster);
            if self.next_registration < self.users.len() {
                cluster.schedule_client(now + self.spacing);
            } else {
                self.schedule_op(cluster);
            }
            return;
        }
        let op = self.draw_op();
        if !self.try_op(op, cluster, clock) && op != Op::Store {
            self.try_op(Op::Store, cluster, clock);
        }
        self.schedule_op(cluster);
    }

    fn schedule_op(&mut self, cluster: &mut Cluster) {
        let per_min = self.cfg.ops_per_minute();
        if per_min <= 0.0 {
            return;
        }
        let gap = exponential(&mut self.arrivals, 60_000.0 / per_min);
        let at = cluster.now() + SimDuration::from_millis_f64(gap);
        if at < self.stop_at {
            cluster.schedule_client(at);
        }
    }

    fn draw_op(&mut self) -> Op {
        let m = self.cfg.mix;
        let weights = [(Op::Store, 1.0), (Op::Grant, m.grant), (Op::Revoke, m.revoke), (Op::Read, m.read), (Op::Probe, m.denied_probe)];
        let total: f64 = weights.iter().map(|w| w.1).sum();
        let mut x = self.arrivals.gen::<f64>() * total;
        for (op, w) in weights {
            if x < w {
                return op;
            }
            x -= w;
        }
        Op::Store
    }

    fn home(&self, cluster: &Cluster, user: usize) -> Option<NodeId> {
        cluster.live_node_from(user)
    }

    fn register_next(&mut self, cluster: &mut Cluster) {
        let u = self.next_registration;
        self.next_registration += 1;
        let user = &self.users[u];
        let Ok(enrollment) = self.registry.register_user(&user.id, user.role, &user.password, cluster.now(), &mut self.rng) else {
            return;
        };
        let Some(via) = self.home(cluster, u) else { return };
        let tx = enrollment.transaction;
        self.users[u].keys = Some(enrollment.keys);
        self.users[u].pending = Some(tx.id);
        self.pending.insert(tx.id, u);
        cluster.submit(tx, via);
    }

    fn idle(&self, u: usize) -> bool {
        let user = &self.users[u];
        user.registered && user.pending.is_none()
    }

    fn login(&mut self, u: usize, now: SimTime) -> Result<AuthSession, IdentityError> {
        let user = &self.users[u];
        let secret = self.registry.totp_secret(&user.id).ok_or(IdentityError::AuthFailed)?;
        let unix = self.registry.config().epoch_unix_secs + now.as_secs();
        let code = totp_code(secret, unix);
        let password = user.password.clone();
        let id = user.id.clone();
        self.registry.authenticate(&id, &password, &code, now)
    }

    fn submit(&mut self, cluster: &mut Cluster, u: usize, draft: TxDraft) -> bool {
        let Some(via) = self.home(cluster, u) else { return false };
        let Some(keys) = &self.users[u].keys else { return false };
        let tx = draft.sign(keys);
        self.users[u].pending = Some(tx.id);
        self.pending.insert(tx.id, u);
        cluster.submit(tx, via);
        true
    }

    fn pick<T: Copy>(&mut self, xs: &[T]) -> Option<T> {
        xs.choose(&mut self.rng).copied()
    }

    fn committed_records(&self, state: &LedgerState) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| state.record(&self.records[i].address).is_some()).collect()
    }

    fn try_op(&mut self, op: Op, cluster: &mut Cluster, clock: Option<&dyn WallClock>) -> bool {
        let now = cluster.now();
        let state = cluster.observer().state().clone();
        let patients: Vec<usize> = (0..self.users.len()).filter(|&u| self.users[u].role == Role::Patient && self.idle(u)).collect();
        let doctors: Vec<usize> =
            (0..self.users.len()).filter(|&u| self.users[u].role == Role::Doctor && self.users[u].registered).collect();
        match op {
            Op::Store => {
                let Some(p) = self.pick(&patients) else { return false };
                self.store(cluster, p, now, clock)
            }
            Op::Grant => {
                let Some(p) = self.pick(&patients) else { return false };
                let Some(d) = self.pick(&doctors) else { return false };
                let own: Vec<usize> = self.committed_records(&state).into_iter().filter(|&r| self.records[r].owner == p).collect();
                let scope = match self.pick(&own) {
                    Some(r) if self.rng.gen_bool(0.5) => AccessScope::Record(self.records[r].address),
                    _ => AccessScope::AllRecords,
                };
                if state.live_grant(&self.users[p].id, &self.users[d].id, scope).is_some() {
                    return false;
                }
                let grantee = self.users[d].id.clone();
                self.authorized(cluster, &state, p, RequestedAction::Grant { grantee: &grantee, scope }, now)
            }
            Op::Revoke => {
                let Some(p) = self.pick(&patients) else { return false };
                let live: Vec<(String, AccessScope)> =
                    state.grants().filter(|g| g.is_live() && g.patient == self.users[p].id).map(|g| (g.grantee.clone(), g.scope)).collect();
                let Some((grantee, scope)) = live.choose(&mut self.rng).cloned() else { return false };
                self.authorized(cluster, &state, p, RequestedAction::Revoke { grantee: &grantee, scope }, now)
            }
            Op::Read => {
                let Some(r) = self.pick(&self.committed_records(&state)) else { return false };
                let rec = self.records[r];
                let owner_id = self.users[rec.owner].id.clone();
                let revoking = self.users[rec.owner].pending.is_some();
                let readers: Vec<usize> = (0..self.users.len())
                    .filter(|&u| {
                        self.idle(u)
                            && (u == rec.owner || (!revoking && state.authorize_read(&self.users[u].id, &owner_id, &rec.address).is_ok()))
                    })
                    .collect();
                let Some(reader) = self.pick(&readers) else { return false };
                let action = RequestedAction::Read { patient: &owner_id, address: rec.address };
                if !self.authorized(cluster, &state, reader, action, now) {
                    return false;
                }
                self.fetch(cluster, reader, rec, clock);
                true
            }
            Op::Probe => {
                let committed = self.committed_records(&state);
                let mut pairs = Vec::new();
                for &d in &doctors {
                    for &r in &committed {
                        let rec = self.records[r];
                        let owner = &self.users[rec.owner].id;
                        if state.authorize_read(&self.users[d].id, owner, &rec.address).is_err() {
                            pairs.push((d, r));
                        }
                    }
                }
                let Some((d, r)) = self.pick(&pairs) else { return false };
                let rec = self.records[r];
                let owner_id = self.users[rec.owner].id.clone();
                self.authorized(cluster, &state, d, RequestedAction::Read { patient: &owner_id, address: rec.address }, now);
                true
            }
        }
    }

    /// Logs in, authorizes `action` and submits the resulting transaction.
    fn authorized(&mut self, cluster: &mut Cluster, state: &LedgerState, u: usize, action: RequestedAction<'_>, now: SimTime) -> bool {
        let Ok(session) = self.login(u, now) else { return false };
        match self.registry.authorize(&session, action, state, now) {
            Ok(draft) => self.submit(cluster, u, draft),
            Err(IdentityError::Denied(reason)) => {
                cluster.log(TraceKind::Denied { actor: self.users[u].id.clone(), reason });
                false
            }
            Err(_) => false,
        }
    }

    fn store(&mut self, cluster: &mut Cluster, p: usize, now: SimTime, clock: Option<&dyn WallClock>) -> bool {
        let size = self.rng.gen_range(self.cfg.record_size.min_bytes..=self.cfg.record_size.max_bytes);
        let mut plaintext = alloc::vec![0u8; size];
        self.rng.fill(plaintext.as_mut_slice());
        let user = &self.users[p];
        let started = clock.map(|c| c.now_ns());
        let Ok(envelope) = seal(&plaintext, &user.password, &self.kdf, user.id.as_bytes(), &mut self.rng) else {
            return false;
        };
        if let (Some(c), Some(t0)) = (clock, started) {
            self.seal_ns.push(c.now_ns().saturating_sub(t0));
        }
        let Some(home) = self.home(cluster, p) else { return false };
        let Ok(address) = cluster.store_put(&envelope.to_bytes(), home) else { return false };
        let draft = TxDraft::store(&user.id, address, envelope.digest(), now.micros() / 1000);
        self.records.push(RecordInfo { owner: p, address, plaintext: Digest::of(&plaintext) });
        self.submit(cluster, p, draft)
    }

    /// Fetches a record for `reader` and checks it decrypts to the stored
    /// plaintext. Decryption uses the owner's secret, standing in for the
    /// key the owner shares with authorized readers.
    fn fetch(&mut self, cluster: &mut Cluster, reader: usize, rec: RecordInfo, clock: Option<&dyn WallClock>) {
        let Some(home) = self.home(cluster, reader) else { return };
        let outcome = match cluster.store_get(&rec.address, home) {
            Err(StoreError::IntegrityFailure(_)) => ReadOutcome::IntegrityFailure,
            Err(_) => ReadOutcome::NotFound,
            Ok(got) => {
                let owner = &self.users[rec.owner];
                let started = clock.map(|c| c.now_ns());
                let opened = SealedEnvelope::from_bytes(&got.data).and_then(|env| open(&env, &owner.password, owner.id.as_bytes()));
                if let (Some(c), Some(t0)) = (clock, started) {
                    self.open_ns.push(c.now_ns().saturating_sub(t0));
                }
                match opened {
                    Ok(pt) if Digest::of(&pt) == rec.plaintext => ReadOutcome::Ok,
                    _ => ReadOutcome::WrongBytes,
                }
            }
        };
        let actor = self.users[reader].id.clone();
        cluster.log(TraceKind::Read { actor, address: rec.address, outcome });
    }
}
