use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::TxError;
use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::Digest;
use crate::keys::{KeyPair, PublicKey, Signature};
use crate::store::ContentAddress;

const TX_DOMAIN: &[u8] = b"ehr-tx-v1";

pub type UserId = String;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Patient,
    Doctor,
}

impl Role {
    fn code(self) -> u8 {
        match self {
            Role::Patient => 0,
            Role::Doctor => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self, DecodeError> {
        match c {
            0 => Ok(Role::Patient),
            1 => Ok(Role::Doctor),
            _ => Err(DecodeError::Invalid("role")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    RegisterUser,
    StoreRecord,
    GrantAccess,
    RevokeAccess,
    AccessRecord,
}

impl Action {
    pub const ALL: [Action; 5] =
        [Action::RegisterUser, Action::StoreRecord, Action::GrantAccess, Action::RevokeAccess, Action::AccessRecord];

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Result<Self, DecodeError> {
        Action::ALL.get(c as usize).copied().ok_or(DecodeError::Invalid("action"))
    }
}

/// Key material a RegisterUser transaction publishes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registration {
    pub role: Role,
    pub public_key: PublicKey,
}

/// Which of a patient's records a grant covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessScope {
    AllRecords,
    Record(ContentAddress),
}

/// Transaction fields before signing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxDraft {
    pub actor: UserId,
    pub action: Action,
    pub subject: UserId,
    pub content_address: Option<ContentAddress>,
    pub envelope_digest: Option<Digest>,
    pub grantee: Option<UserId>,
    pub registration: Option<Registration>,
    pub timestamp_ms: u64,
}

impl TxDraft {
    pub fn new(actor: &str, action: Action, subject: &str, timestamp_ms: u64) -> Self {
        TxDraft {
            actor: actor.into(),
            action,
            subject: subject.into(),
            content_address: None,
            envelope_digest: None,
            grantee: None,
            registration: None,
            timestamp_ms,
        }
    }

    pub fn register(user: &str, role: Role, public_key: PublicKey, timestamp_ms: u64) -> Self {
        TxDraft { registration: Some(Registration { role, public_key }), ..TxDraft::new(user, Action::RegisterUser, user, timestamp_ms) }
    }

    pub fn store(patient: &str, address: ContentAddress, envelope: Digest, timestamp_ms: u64) -> Self {
        TxDraft {
            content_address: Some(address),
            envelope_digest: Some(envelope),
            ..TxDraft::new(patient, Action::StoreRecord, patient, timestamp_ms)
        }
    }

    pub fn grant(patient: &str, grantee: &str, scope: AccessScope, timestamp_ms: u64) -> Self {
        TxDraft {
            grantee: Some(grantee.into()),
            content_address: scope_address(scope),
            ..TxDraft::new(patient, Action::GrantAccess, patient, timestamp_ms)
        }
    }

    pub fn revoke(patient: &str, grantee: &str, scope: AccessScope, timestamp_ms: u64) -> Self {
        TxDraft {
            grantee: Some(grantee.into()),
            content_address: scope_address(scope),
            ..TxDraft::new(patient, Action::RevokeAccess, patient, timestamp_ms)
        }
    }

    pub fn access(actor: &str, patient: &str, address: ContentAddress, timestamp_ms: u64) -> Self {
        TxDraft { content_address: Some(address), ..TxDraft::new(actor, Action::AccessRecord, patient, timestamp_ms) }
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(TX_DOMAIN);
        self.encode_fields(&mut w);
        w.finish()
    }

    fn encode_fields(&self, w: &mut Writer) {
        w.u8(self.action.code()).str(&self.actor).str(&self.subject);
        match &self.content_address {
            Some(a) => w.u8(1).fixed(a.0.as_bytes()),
            None => w.u8(0),
        };
        match &self.envelope_digest {
            Some(d) => w.u8(1).fixed(d.as_bytes()),
            None => w.u8(0),
        };
        match &self.grantee {
            Some(g) => w.u8(1).str(g),
            None => w.u8(0),
        };
        match &self.registration {
            Some(r) => {
                w.u8(1).u8(r.role.code());
                r.public_key.encode(w);
            }
            None => {
                w.u8(0);
            }
        }
        w.u64(self.timestamp_ms);
    }

    fn decode_fields(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let action = Action::from_code(r.u8()?)?;
        let actor = r.string()?;
        let subject = r.string()?;
        let content_address = if r.bool()? { Some(ContentAddress(Digest(r.array()?))) } else { None };
        let envelope_digest = if r.bool()? { Some(Digest(r.array()?)) } else { None };
        let grantee = if r.bool()? { Some(r.string()?) } else { None };
        let registration = if r.bool()? {
            let role = Role::from_code(r.u8()?)?;
            Some(Registration { role, public_key: PublicKey::decode(r)? })
        } else {
            None
        };
        let timestamp_ms = r.u64()?;
        Ok(TxDraft { actor, action, subject, content_address, envelope_digest, grantee, registration, timestamp_ms })
    }

    pub fn sign(self, keys: &KeyPair) -> RecordTransaction {
        let signature = keys.sign(&self.signing_bytes());
        let id = tx_id(&self, &signature);
        RecordTransaction { id, body: self, signature }
    }
}

fn scope_address(scope: AccessScope) -> Option<ContentAddress> {
    match scope {
        AccessScope::AllRecords => None,
        AccessScope::Record(a) => Some(a),
    }
}

fn tx_id(body: &TxDraft, signature: &Signature) -> Digest {
    Digest::of_parts(&[&body.signing_bytes(), &signature.0])
}

/// A signed ledger transaction. Its id is the digest of the signed bytes
/// together with the signature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordTransaction {
    pub id: Digest,
    pub body: TxDraft,
    pub signature: Signature,
}

impl RecordTransaction {
    pub fn actor(&self) -> &str {
        &self.body.actor
    }

    pub fn action(&self) -> Action {
        self.body.action
    }

    pub fn subject(&self) -> &str {
        &self.body.subject
    }

    pub fn timestamp_ms(&self) -> u64 {
        self.body.timestamp_ms
    }

    pub fn scope(&self) -> AccessScope {
        match self.body.content_address {
            Some(a) => AccessScope::Record(a),
            None => AccessScope::AllRecords,
        }
    }

    pub fn id_is_consistent(&self) -> bool {
        tx_id(&self.body, &self.signature) == self.id
    }

    pub fn verify_signature(&self, key: &PublicKey) -> bool {
        key.verify(&self.body.signing_bytes(), &self.signature)
    }

    /// Optional fields present exactly when the action needs them.
    pub fn check_fields(&self) -> Result<(), TxError> {
        let b = &self.body;
        let (content, envelope, grantee, registration) =
            (b.content_address.is_some(), b.envelope_digest.is_some(), b.grantee.is_some(), b.registration.is_some());
        let ok = match b.action {
            Action::RegisterUser => !content && !envelope && !grantee && registration,
            Action::StoreRecord => content && envelope && !grantee && !registration,
            Action::GrantAccess | Action::RevokeAccess => !envelope && grantee && !registration,
            Action::AccessRecord => content && !envelope && !grantee && !registration,
        };
        if !ok {
            return Err(TxError::FieldRules(b.action));
        }
        if b.actor.is_empty() || b.subject.is_empty() || b.grantee.as_ref().is_some_and(|g| g.is_empty()) {
            return Err(TxError::EmptyUserId);
        }
        Ok(())
    }

    pub fn encode(&self, w: &mut Writer) {
        w.fixed(self.id.as_bytes());
        self.body.encode_fields(w);
        w.fixed(&self.signature.0);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let id = Digest(r.array()?);
        let body = TxDraft::decode_fields(r)?;
        let signature = Signature(r.array()?);
        Ok(RecordTransaction { id, body, signature })
    }

    pub fn encoded_len(&self) -> usize {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn encode_round_trip_and_id() {
        let k = KeyPair::generate(&mut seeded(1));
        let tx = TxDraft::register("alice", Role::Patient, k.public(), 5).sign(&k);
        assert!(tx.id_is_consistent());
        assert!(tx.verify_signature(&k.public()));
        assert!(tx.check_fields().is_ok());
        let mut w = Writer::new();
        tx.encode(&mut w);
        let bytes = w.finish();
        let mut r = Reader::new(&bytes);
        assert_eq!(RecordTransaction::decode(&mut r).unwrap(), tx);
        r.finish().unwrap();
    }

    #[test]
    fn field_rules() {
        let k = KeyPair::generate(&mut seeded(1));
        let mut d = TxDraft::new("alice", Action::StoreRecord, "alice", 0);
        assert_eq!(d.clone().sign(&k).check_fields(), Err(TxError::FieldRules(Action::StoreRecord)));
        d.content_address = Some(ContentAddress::of(b"x"));
        d.envelope_digest = Some(Digest::of(b"e"));
        assert!(d.sign(&k).check_fields().is_ok());
        let g = TxDraft::grant("alice", "bob", AccessScope::AllRecords, 0).sign(&k);
        assert!(g.check_fields().is_ok());
        assert_eq!(g.scope(), AccessScope::AllRecords);
    }
}
