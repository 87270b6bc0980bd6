use alloc::collections::BTreeMap;

use serde::Serialize;

use super::tx::{AccessScope, Action, RecordTransaction, Role, UserId};
use super::{AccessDenied, TxError};
use crate::hash::Digest;
use crate::keys::PublicKey;
use crate::store::ContentAddress;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UserEntry {
    pub role: Role,
    pub public_key: PublicKey,
    pub registered_at_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RecordEntry {
    pub patient: UserId,
    pub envelope_digest: Digest,
    pub stored_by: UserId,
    pub stored_at_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AccessGrant {
    pub patient: UserId,
    pub grantee: UserId,
    pub scope: AccessScope,
    pub granted_at_ms: u64,
    pub revoked_at_ms: Option<u64>,
}

impl AccessGrant {
    pub fn is_live(&self) -> bool {
        self.revoked_at_ms.is_none()
    }
}

/// Users, records and grants as materialized from the chain.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LedgerState {
    users: BTreeMap<UserId, UserEntry>,
    records: BTreeMap<ContentAddress, RecordEntry>,
    /// Latest grant per (patient, grantee, scope).
    grants: BTreeMap<(UserId, UserId, AccessScope), AccessGrant>,
}

impl LedgerState {
    pub fn user(&self, id: &str) -> Option<&UserEntry> {
        self.users.get(id)
    }

    pub fn users(&self) -> impl Iterator<Item = (&UserId, &UserEntry)> {
        self.users.iter()
    }

    pub fn record(&self, address: &ContentAddress) -> Option<&RecordEntry> {
        self.records.get(address)
    }

    pub fn records(&self) -> impl Iterator<Item = (&ContentAddress, &RecordEntry)> {
        self.records.iter()
    }

    pub fn grants(&self) -> impl Iterator<Item = &AccessGrant> {
        self.grants.values()
    }

    pub fn live_grant(&self, patient: &str, grantee: &str, scope: AccessScope) -> Option<&AccessGrant> {
        self.grants.get(&(patient.into(), grantee.into(), scope)).filter(|g| g.is_live())
    }

    /// Whether `actor` may read `patient`'s record at `address`.
    pub fn authorize_read(&self, actor: &str, patient: &str, address: &ContentAddress) -> Result<(), AccessDenied> {
        let user = self.users.get(actor).ok_or(AccessDenied::UnknownUser)?;
        let record = self.records.get(address).ok_or(AccessDenied::UnknownRecord)?;
        if record.patient != patient {
            return Err(AccessDenied::UnknownRecord);
        }
        if actor == patient {
            return Ok(());
        }
        match user.role {
            Role::Patient => Err(AccessDenied::RoleViolation),
            Role::Doctor => {
                let covered = self.live_grant(patient, actor, AccessScope::AllRecords).is_some()
                    || self.live_grant(patient, actor, AccessScope::Record(*address)).is_some();
                if covered {
                    Ok(())
                } else {
                    Err(AccessDenied::NoGrant)
                }
            }
        }
    }

    /// Whether `actor` may add records to `patient`'s history.
    pub fn authorize_write(&self, actor: &str, patient: &str) -> Result<(), AccessDenied> {
        let user = self.users.get(actor).ok_or(AccessDenied::UnknownUser)?;
        let owner = self.users.get(patient).ok_or(AccessDenied::UnknownUser)?;
        if owner.role != Role::Patient {
            return Err(AccessDenied::RoleViolation);
        }
        if actor == patient {
            return Ok(());
        }
        match user.role {
            Role::Doctor if self.live_grant(patient, actor, AccessScope::AllRecords).is_some() => Ok(()),
            Role::Doctor => Err(AccessDenied::NoGrant),
            Role::Patient => Err(AccessDenied::RoleViolation),
        }
    }

    /// Full validity of `tx` against this state: fields, signature and
    /// authorization.
    pub fn check(&self, tx: &RecordTransaction) -> Result<(), TxError> {
        tx.check_fields()?;
        if !tx.id_is_consistent() {
            return Err(TxError::IdMismatch);
        }
        let b = &tx.body;
        let key = match (&b.action, &b.registration) {
            (Action::RegisterUser, Some(reg)) => &reg.public_key,
            _ => &self.users.get(&b.actor).ok_or(TxError::UnknownActor)?.public_key,
        };
        if !tx.verify_signature(key) {
            return Err(TxError::BadSignature);
        }
        match b.action {
            Action::RegisterUser => {
                if b.actor != b.subject {
                    return Err(TxError::Denied(AccessDenied::RoleViolation));
                }
                if self.users.contains_key(&b.actor) {
                    return Err(TxError::DuplicateUser);
                }
            }
            Action::StoreRecord => {
                self.authorize_write(&b.actor, &b.subject)?;
                if let Some(a) = &b.content_address {
                    if self.records.contains_key(a) {
                        return Err(TxError::DuplicateRecord);
                    }
                }
            }
            Action::GrantAccess | Action::RevokeAccess => {
                let actor = self.users.get(&b.actor).ok_or(TxError::UnknownActor)?;
                let grantee = b.grantee.as_deref().unwrap_or_default();
                if b.actor != b.subject || actor.role != Role::Patient || grantee == b.actor {
                    return Err(TxError::Denied(AccessDenied::RoleViolation));
                }
                if !self.users.contains_key(grantee) {
                    return Err(TxError::UnknownGrantee);
                }
                if let AccessScope::Record(a) = tx.scope() {
                    match self.records.get(&a) {
                        Some(r) if r.patient == b.subject => {}
                        _ => return Err(TxError::Denied(AccessDenied::UnknownRecord)),
                    }
                }
                let live = self.live_grant(&b.subject, grantee, tx.scope()).is_some();
                match (b.action, live) {
                    (Action::GrantAccess, true) => return Err(TxError::DuplicateGrant),
                    (Action::RevokeAccess, false) => return Err(TxError::Denied(AccessDenied::NoGrant)),
                    _ => {}
                }
            }
            Action::AccessRecord => {
                let a = b.content_address.as_ref().ok_or(TxError::FieldRules(b.action))?;
                self.authorize_read(&b.actor, &b.subject, a)?;
            }
        }
        Ok(())
    }

    /// Checks then applies `tx`.
    pub fn apply(&mut self, tx: &RecordTransaction) -> Result<(), TxError> {
        self.check(tx)?;
        self.apply_unchecked(tx);
        Ok(())
    }

    /// State effect of `tx` without any validation.
    pub fn apply_unchecked(&mut self, tx: &RecordTransaction) {
        let b = &tx.body;
        match b.action {
            Action::RegisterUser => {
                if let Some(reg) = &b.registration {
                    self.users.insert(
                        b.actor.clone(),
                        UserEntry { role: reg.role, public_key: reg.public_key, registered_at_ms: b.timestamp_ms },
                    );
                }
            }
            Action::StoreRecord => {
                if let (Some(a), Some(e)) = (b.content_address, b.envelope_digest) {
                    self.records.insert(
                        a,
                        RecordEntry {
                            patient: b.subject.clone(),
                            envelope_digest: e,
                            stored_by: b.actor.clone(),
                            stored_at_ms: b.timestamp_ms,
                        },
                    );
                }
            }
            Action::GrantAccess => {
                let grantee = b.grantee.clone().unwrap_or_default();
                let key = (b.subject.clone(), grantee.clone(), tx.scope());
                self.grants.insert(
                    key,
                    AccessGrant {
                        patient: b.subject.clone(),
                        grantee,
                        scope: tx.scope(),
                        granted_at_ms: b.timestamp_ms,
                        revoked_at_ms: None,
                    },
                );
            }
            Action::RevokeAccess => {
                let key = (b.subject.clone(), b.grantee.clone().unwrap_or_default(), tx.scope());
                if let Some(g) = self.grants.get_mut(&key) {
                    g.revoked_at_ms = Some(b.timestamp_ms);
                }
            }
            Action::AccessRecord => {}
        }
    }
}
