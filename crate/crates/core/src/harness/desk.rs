use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use zeroize::Zeroizing;

use super::{Cluster, HarnessError, ScenarioConfig, Step, WorkloadConfig};
use crate::crypto::{open, seal, CryptoError, KdfCost, SealedEnvelope};
use crate::hash::{hex_array, Digest};
use crate::identity::{AuthSession, IdentityConfig, IdentityError, Registry, RequestedAction, StoredIdentity, TOTP_SECRET_LEN};
use crate::keys::{KeyPair, NodeId, PublicKey};
use crate::ledger::{AccessScope, Chain, RecordTransaction, Role, TxError, UserId};
use crate::rng::seeded;
use crate::store::{ContentAddress, StoreError};
use crate::time::{SimDuration, SimTime};

/// How long one desk operation may take to commit, in simulated time.
const COMMIT_BUDGET: SimDuration = SimDuration::from_millis(60_000);
/// Simulated time given to gossip after a record is stored.
const REPLICATION_BUDGET: SimDuration = SimDuration::from_millis(10_000);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeskError {
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("transaction rejected by the ledger: {0}")]
    Rejected(TxError),
    #[error("transaction did not commit within the time budget")]
    Stalled,
    #[error("no signing key for user {0}")]
    UnknownUser(UserId),
    #[error("record {0} is not on the ledger")]
    UnknownRecord(ContentAddress),
    #[error("stored envelope does not match the ledger digest")]
    EnvelopeMismatch,
    #[error("desk state is inconsistent: {0}")]
    BadState(&'static str),
}

/// One user as the desk persists it: registry entry plus signing key seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskUser {
    pub identity: StoredIdentity,
    #[serde(with = "hex_array")]
    pub signing_seed: [u8; 32],
}

/// Everything except the ledger and record envelopes, which are persisted
/// separately in their own formats.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskState {
    pub seed: u64,
    pub nodes: usize,
    pub kdf: KdfCost,
    /// Simulated time reached by the last operation, in microseconds.
    pub clock_us: u64,
    pub users: Vec<DeskUser>,
}

#[derive(Debug)]
pub struct Registered {
    pub public_key: PublicKey,
    pub totp_secret: Zeroizing<[u8; TOTP_SECRET_LEN]>,
    pub tx: Digest,
    pub height: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Committed {
    pub tx: Digest,
    pub height: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StoredRecord {
    pub address: ContentAddress,
    pub envelope_digest: Digest,
    pub replicas: usize,
    pub tx: Digest,
    pub height: u64,
}

#[derive(Debug)]
pub struct FetchedRecord {
    pub plaintext: Zeroizing<Vec<u8>>,
    pub served_by: NodeId,
    pub access_tx: Digest,
    pub height: u64,
}

/// Interactive front desk over a simulated cluster: registration, login,
/// grants and sealed record storage, each committed through consensus
/// before it returns.
pub struct Desk {
    seed: u64,
    cluster: Cluster,
    registry: Registry,
    keys: BTreeMap<UserId, KeyPair>,
    envelopes: BTreeMap<ContentAddress, Vec<u8>>,
}

impl Desk {
    /// A fresh desk with an empty ledger. `unix_now` anchors TOTP checks.
    pub fn create(seed: u64, nodes: usize, kdf: KdfCost, unix_now: u64) -> Result<Self, DeskError> {
        let state = DeskState { seed, nodes, kdf, clock_us: 0, users: Vec::new() };
        Self::load(state, None, Vec::new(), unix_now)
    }

    /// Resumes a desk from persisted state, ledger and envelopes.
    pub fn load(state: DeskState, chain: Option<Chain>, envelopes: Vec<Vec<u8>>, unix_now: u64) -> Result<Self, DeskError> {
        let cfg = Self::scenario(&state);
        let mut cluster = Cluster::new(&cfg, &mut seeded(state.seed))?;
        if let Some(chain) = chain {
            cluster.restore(chain)?;
        }
        cluster.advance_clock(SimTime(state.clock_us));
        let identity = IdentityConfig {
            password_cost: state.kdf,
            epoch_unix_secs: unix_now.saturating_sub(cluster.now().as_secs()),
            ..IdentityConfig::default()
        };
        let stored: Vec<StoredIdentity> = state.users.iter().map(|u| u.identity.clone()).collect();
        let registry = Registry::import(identity, &stored)?;
        let mut keys = BTreeMap::new();
        for u in &state.users {
            let pair = KeyPair::from_seed(u.signing_seed);
            if pair.public() != u.identity.public_key {
                return Err(DeskError::BadState("signing seed does not match the public key"));
            }
            keys.insert(u.identity.id.clone(), pair);
        }
        let mut desk = Desk { seed: state.seed, cluster, registry, keys, envelopes: BTreeMap::new() };
        for bytes in envelopes {
            desk.put_envelope(bytes)?;
        }
        Ok(desk)
    }

    fn scenario(state: &DeskState) -> ScenarioConfig {
        ScenarioConfig {
            name: String::from("desk"),
            seed: state.seed,
            nodes: state.nodes,
            workload: WorkloadConfig::registrations_only(0, 0),
            kdf: state.kdf,
            ..ScenarioConfig::default()
        }
    }

    pub fn state(&self) -> DeskState {
        let users = self
            .registry
            .export()
            .into_iter()
            .map(|identity| {
                let signing_seed = self.keys[&identity.id].seed();
                DeskUser { identity, signing_seed }
            })
            .collect();
        DeskState {
            seed: self.seed,
            nodes: self.cluster.config().nodes,
            kdf: self.cluster.config().kdf,
            clock_us: self.cluster.now().micros(),
            users,
        }
    }

    pub fn chain(&self) -> &Chain {
        self.cluster.observer()
    }

    pub fn envelopes(&self) -> &BTreeMap<ContentAddress, Vec<u8>> {
        &self.envelopes
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn now(&self) -> SimTime {
        self.cluster.now()
    }

    /// Unix time the registry uses for TOTP checks at the current instant.
    pub fn unix_now(&self) -> u64 {
        self.registry.config().epoch_unix_secs + self.now().as_secs()
    }

    fn put_envelope(&mut self, bytes: Vec<u8>) -> Result<ContentAddress, DeskError> {
        let home = self.cluster.live_node_from(0).ok_or(StoreError::NotFound(ContentAddress::of(&bytes)))?;
        let address = self.cluster.store_put(&bytes, home)?;
        self.envelopes.insert(address, bytes);
        Ok(address)
    }

    /// Submits `tx` and runs the cluster until it commits.
    fn commit(&mut self, tx: RecordTransaction) -> Result<Committed, DeskError> {
        self.chain().state().check(&tx).map_err(DeskError::Rejected)?;
        let via = self.cluster.live_node_from(0).ok_or(DeskError::Stalled)?;
        let id = tx.id;
        self.cluster.submit(tx, via);
        let limit = self.now() + COMMIT_BUDGET;
        if !self.cluster.settle(limit) || !self.cluster.is_committed(&id) {
            return Err(DeskError::Stalled);
        }
        self.cluster.take_committed();
        let (height, _) = self.chain().locate(&id).ok_or(DeskError::Stalled)?;
        Ok(Committed { tx: id, height })
    }

    fn sign(&self, user: &str, draft: crate::ledger::TxDraft) -> Result<RecordTransaction, DeskError> {
        let keys = self.keys.get(user).ok_or_else(|| DeskError::UnknownUser(user.into()))?;
        Ok(draft.sign(keys))
    }

    pub fn register<R: RngCore + CryptoRng>(
        &mut self,
        id: &str,
        role: Role,
        password: &[u8],
        rng: &mut R,
    ) -> Result<Registered, DeskError> {
        if password.is_empty() {
            return Err(CryptoError::EmptyPassword.into());
        }
        let now = self.now();
        // a scratch registry keeps a failed commit from leaving the user behind
        let mut scratch = Registry::import(*self.registry.config(), &self.registry.export())?;
        let enrollment = scratch.register_user(id, role, password, now, rng)?;
        let public_key = enrollment.keys.public();
        let committed = self.commit(enrollment.transaction)?;
        self.registry = scratch;
        self.keys.insert(id.into(), enrollment.keys);
        Ok(Registered { public_key, totp_secret: enrollment.totp_secret, tx: committed.tx, height: committed.height })
    }

    pub fn login(&mut self, id: &str, password: &[u8], code: &str) -> Result<AuthSession, DeskError> {
        let now = self.now();
        Ok(self.registry.authenticate(id, password, code, now)?)
    }

    fn authorized(&self, session: &AuthSession, action: RequestedAction<'_>) -> Result<RecordTransaction, DeskError> {
        let draft = self.registry.authorize(session, action, self.chain().state(), self.now())?;
        self.sign(&session.user, draft)
    }

    pub fn grant(&mut self, session: &AuthSession, grantee: &str, scope: AccessScope) -> Result<Committed, DeskError> {
        let tx = self.authorized(session, RequestedAction::Grant { grantee, scope })?;
        self.commit(tx)
    }

    pub fn revoke(&mut self, session: &AuthSession, grantee: &str, scope: AccessScope) -> Result<Committed, DeskError> {
        let tx = self.authorized(session, RequestedAction::Revoke { grantee, scope })?;
        self.commit(tx)
    }

    /// Seals `plaintext` under `password` bound to the owner's id, stores
    /// the envelope, records it on the ledger and lets gossip replicate it.
    pub fn store_record<R: RngCore + CryptoRng>(
        &mut self,
        session: &AuthSession,
        password: &[u8],
        plaintext: &[u8],
        rng: &mut R,
    ) -> Result<StoredRecord, DeskError> {
        let owner = session.user.clone();
        let draft = self.registry.authorize(session, RequestedAction::Store { patient: &owner }, self.chain().state(), self.now())?;
        let kdf = self.cluster.config().kdf;
        let envelope = seal(plaintext, password, &kdf, owner.as_bytes(), rng)?;
        let envelope_digest = envelope.digest();
        let address = self.put_envelope(envelope.to_bytes())?;
        let draft = crate::ledger::TxDraft { content_address: Some(address), envelope_digest: Some(envelope_digest), ..draft };
        let tx = self.sign(&owner, draft)?;
        let committed = self.commit(tx)?;
        self.replicate();
        let replicas = self.cluster.store().live_replicas(&address);
        Ok(StoredRecord { address, envelope_digest, replicas, tx: committed.tx, height: committed.height })
    }

    fn replicate(&mut self) {
        let until = self.now() + REPLICATION_BUDGET;
        self.cluster.start_periodic(until);
        while let Step::Client = self.cluster.step_until(until) {}
        self.cluster.advance_clock(until);
    }

    /// Authorizes the read against the ledger, records the access, then
    /// fetches and opens the envelope. `record_password` is the secret the
    /// owner sealed with and shares with authorized readers.
    pub fn fetch_record(
        &mut self,
        session: &AuthSession,
        patient: &str,
        address: ContentAddress,
        record_password: &[u8],
    ) -> Result<FetchedRecord, DeskError> {
        let expected = self.chain().state().record(&address).ok_or(DeskError::UnknownRecord(address))?.envelope_digest;
        let tx = self.authorized(session, RequestedAction::Read { patient, address })?;
        let committed = self.commit(tx)?;
        let node = self.cluster.live_node_from(0).ok_or(StoreError::NotFound(address))?;
        let got = self.cluster.store_get(&address, node)?;
        let envelope = SealedEnvelope::from_bytes(&got.data)?;
        if envelope.digest() != expected {
            return Err(DeskError::EnvelopeMismatch);
        }
        let plaintext = Zeroizing::new(open(&envelope, record_password, patient.as_bytes())?);
        Ok(FetchedRecord { plaintext, served_by: node, access_tx: committed.tx, height: committed.height })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::totp_code;
    use crate::rng::seeded;

    const UNIX: u64 = 1_700_000_000;

    fn desk() -> Desk {
        Desk::create(11, 4, KdfCost::light(), UNIX).unwrap()
    }

    fn login(d: &mut Desk, id: &str, pw: &[u8], secret: &[u8]) -> AuthSession {
        let code = totp_code(secret, d.unix_now());
        d.login(id, pw, &code).unwrap()
    }

    #[test]
    fn store_grant_fetch_revoke() {
        let mut d = desk();
        let mut rng = seeded(1);
        let alice = d.register("alice", Role::Patient, b"alice-pw", &mut rng).unwrap();
        let bob = d.register("bob", Role::Doctor, b"bob-pw", &mut rng).unwrap();
        assert!(bob.height > alice.height);

        let sa = login(&mut d, "alice", b"alice-pw", alice.totp_secret.as_ref());
        let rec = d.store_record(&sa, b"alice-pw", b"blood type O+", &mut rng).unwrap();
        assert_eq!(rec.replicas, 3);

        let sb = login(&mut d, "bob", b"bob-pw", bob.totp_secret.as_ref());
        let denied = d.fetch_record(&sb, "alice", rec.address, b"alice-pw").unwrap_err();
        assert!(matches!(denied, DeskError::Identity(IdentityError::Denied(_))));

        let sa = login(&mut d, "alice", b"alice-pw", alice.totp_secret.as_ref());
        d.grant(&sa, "bob", AccessScope::AllRecords).unwrap();
        let sb = login(&mut d, "bob", b"bob-pw", bob.totp_secret.as_ref());
        let got = d.fetch_record(&sb, "alice", rec.address, b"alice-pw").unwrap();
        assert_eq!(got.plaintext.as_slice(), b"blood type O+");
        assert!(d.chain().locate(&got.access_tx).is_some());

        let sa = login(&mut d, "alice", b"alice-pw", alice.totp_secret.as_ref());
        d.revoke(&sa, "bob", AccessScope::AllRecords).unwrap();
        assert!(d.fetch_record(&sb, "alice", rec.address, b"alice-pw").is_err());
        assert!(d.chain().validate_chain().is_ok());
    }

    #[test]
    fn state_round_trip_resumes_the_desk() {
        let mut d = desk();
        let mut rng = seeded(2);
        let alice = d.register("alice", Role::Patient, b"pw", &mut rng).unwrap();
        let sa = login(&mut d, "alice", b"pw", alice.totp_secret.as_ref());
        let rec = d.store_record(&sa, b"pw", b"x-ray", &mut rng).unwrap();
        let state = d.state();
        let chain = Chain::import(&d.chain().export()).unwrap();
        let envelopes: Vec<Vec<u8>> = d.envelopes().values().cloned().collect();
        let clock = d.now();

        let mut back = Desk::load(state.clone(), Some(chain), envelopes, UNIX + 3600).unwrap();
        assert!(back.now() >= clock);
        assert_eq!(back.state().users, state.users);
        let sa = login(&mut back, "alice", b"pw", alice.totp_secret.as_ref());
        assert_eq!(back.fetch_record(&sa, "alice", rec.address, b"pw").unwrap().plaintext.as_slice(), b"x-ray");
        // a repeated grant after a restart must not collide with history
        back.register("bob", Role::Doctor, b"pw2", &mut rng).unwrap();
        back.grant(&sa, "bob", AccessScope::AllRecords).unwrap();
        back.revoke(&sa, "bob", AccessScope::AllRecords).unwrap();
        back.grant(&sa, "bob", AccessScope::AllRecords).unwrap();
    }

    #[test]
    fn failures_leave_no_trace() {
        let mut d = desk();
        let mut rng = seeded(3);
        let alice = d.register("alice", Role::Patient, b"pw", &mut rng).unwrap();
        assert!(matches!(d.register("alice", Role::Patient, b"pw", &mut rng), Err(DeskError::Identity(IdentityError::DuplicateId))));
        assert!(matches!(
            d.login("alice", b"wrong", &totp_code(alice.totp_secret.as_ref(), d.unix_now())),
            Err(DeskError::Identity(IdentityError::AuthFailed))
        ));
        assert!(matches!(d.login("alice", b"pw", "000000"), Err(DeskError::Identity(IdentityError::AuthFailed))));
        let sa = login(&mut d, "alice", b"pw", alice.totp_secret.as_ref());
        assert!(d.grant(&sa, "nobody", AccessScope::AllRecords).is_err());
        assert_eq!(d.state().users.len(), 1);
    }
}
