use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;

use rand_core::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use super::totp::{verify_totp, TOTP_SECRET_LEN};
use super::IdentityError;
use crate::crypto::{hash_password, verify_password, KdfCost};
use crate::keys::{KeyPair, PublicKey};
use crate::ledger::{AccessDenied, AccessScope, LedgerState, RecordTransaction, Role, TxDraft, UserId};
use crate::store::ContentAddress;
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentityConfig {
    pub session_ttl: SimDuration,
    pub password_cost: KdfCost,
    pub totp_skew_steps: u64,
    /// Unix time corresponding to simulated time zero.
    pub epoch_unix_secs: u64,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        IdentityConfig {
            session_ttl: SimDuration::from_millis(15 * 60 * 1000),
            password_cost: KdfCost::default(),
            totp_skew_steps: 1,
            epoch_unix_secs: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UserIdentity {
    pub id: UserId,
    pub role: Role,
    pub public_key: PublicKey,
    /// PHC-format password verifier.
    pub verifier: String,
    #[serde(skip)]
    totp_secret: Zeroizing<[u8; TOTP_SECRET_LEN]>,
    pub mfa_enabled: bool,
    pub created_at: SimTime,
}

/// A registered user including the TOTP secret, for persisting a registry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredIdentity {
    pub id: UserId,
    pub role: Role,
    pub public_key: PublicKey,
    pub verifier: String,
    #[serde(with = "crate::hash::hex_array")]
    pub totp_secret: [u8; TOTP_SECRET_LEN],
    pub mfa_enabled: bool,
    pub created_at: SimTime,
}

impl Drop for StoredIdentity {
    fn drop(&mut self) {
        zeroize::Zeroize::zeroize(&mut self.totp_secret);
    }
}

/// What registration hands back to the user, once.
#[derive(Debug)]
pub struct Enrollment {
    pub identity: UserIdentity,
    pub transaction: RecordTransaction,
    pub keys: KeyPair,
    pub totp_secret: Zeroizing<[u8; TOTP_SECRET_LEN]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Password,
    Totp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuthSession {
    pub user: UserId,
    pub role: Role,
    pub issued_at: SimTime,
    pub expires_at: SimTime,
    pub factors: BTreeSet<Factor>,
}

impl AuthSession {
    pub fn is_valid(&self, now: SimTime) -> bool {
        self.factors.contains(&Factor::Password) && self.factors.contains(&Factor::Totp) && now < self.expires_at
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AuthFailureCounters {
    pub unknown_user: u64,
    pub bad_password: u64,
    pub bad_code: u64,
}

/// An operation a session asks to perform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RequestedAction<'a> {
    Read { patient: &'a str, address: ContentAddress },
    Store { patient: &'a str },
    Grant { grantee: &'a str, scope: AccessScope },
    Revoke { grantee: &'a str, scope: AccessScope },
}

#[derive(Debug, Default)]
pub struct Registry {
    config: IdentityConfig,
    users: BTreeMap<UserId, UserIdentity>,
    failures: AuthFailureCounters,
}

impl Registry {
    pub fn new(config: IdentityConfig) -> Self {
        Registry { config, users: BTreeMap::new(), failures: AuthFailureCounters::default() }
    }

    /// Rebuilds a registry from [`Registry::export`] output.
    pub fn import(config: IdentityConfig, users: &[StoredIdentity]) -> Result<Self, IdentityError> {
        let mut reg = Registry::new(config);
        for u in users {
            if u.id.is_empty() {
                return Err(IdentityError::EmptyId);
            }
            let identity = UserIdentity {
                id: u.id.clone(),
                role: u.role,
                public_key: u.public_key,
                verifier: u.verifier.clone(),
                totp_secret: Zeroizing::new(u.totp_secret),
                mfa_enabled: u.mfa_enabled,
                created_at: u.created_at,
            };
            if reg.users.insert(u.id.clone(), identity).is_some() {
                return Err(IdentityError::DuplicateId);
            }
        }
        Ok(reg)
    }

    pub fn export(&self) -> alloc::vec::Vec<StoredIdentity> {
        self.users
            .values()
            .map(|u| StoredIdentity {
                id: u.id.clone(),
                role: u.role,
                public_key: u.public_key,
                verifier: u.verifier.clone(),
                totp_secret: *u.totp_secret,
                mfa_enabled: u.mfa_enabled,
                created_at: u.created_at,
            })
            .collect()
    }

    pub fn config(&self) -> &IdentityConfig {
        &self.config
    }

    pub fn user(&self, id: &str) -> Option<&UserIdentity> {
        self.users.get(id)
    }

    pub fn failures(&self) -> AuthFailureCounters {
        self.failures
    }

    /// Creates keys, a password verifier and a TOTP secret for `id`, and the
    /// signed RegisterUser transaction announcing the public key.
    pub fn register_user<R: RngCore + CryptoRng>(
        &mut self,
        id: &str,
        role: Role,
        password: &[u8],
        now: SimTime,
        rng: &mut R,
    ) -> Result<Enrollment, IdentityError> {
        if id.is_empty() {
            return Err(IdentityError::EmptyId);
        }
        if self.users.contains_key(id) {
            return Err(IdentityError::DuplicateId);
        }
        let keys = KeyPair::generate(rng);
        let verifier = hash_password(password, &self.config.password_cost.fresh(rng))?;
        let mut secret = Zeroizing::new([0u8; TOTP_SECRET_LEN]);
        rng.fill_bytes(secret.as_mut());
        let identity = UserIdentity {
            id: id.into(),
            role,
            public_key: keys.public(),
            verifier,
            totp_secret: secret.clone(),
            mfa_enabled: true,
            created_at: now,
        };
        let transaction = TxDraft::register(id, role, keys.public(), now.micros() / 1000).sign(&keys);
        self.users.insert(id.into(), identity.clone());
        Ok(Enrollment { identity, transaction, keys, totp_secret: secret })
    }

    fn unix_secs(&self, now: SimTime) -> u64 {
        self.config.epoch_unix_secs + now.as_secs()
    }

    /// Both factors must pass. Every failure looks the same to the caller.
    pub fn authenticate(&mut self, id: &str, password: &[u8], code: &str, now: SimTime) -> Result<AuthSession, IdentityError> {
        let Some(user) = self.users.get(id) else {
            self.failures.unknown_user += 1;
            return Err(IdentityError::AuthFailed);
        };
        let password_ok = !password.is_empty() && verify_password(password, &user.verifier).unwrap_or(false);
        let code_ok = !user.mfa_enabled || verify_totp(user.totp_secret.as_ref(), code, self.unix_secs(now), self.config.totp_skew_steps);
        if !password_ok {
            self.failures.bad_password += 1;
            return Err(IdentityError::AuthFailed);
        }
        if !code_ok {
            self.failures.bad_code += 1;
            return Err(IdentityError::AuthFailed);
        }
        Ok(AuthSession {
            user: user.id.clone(),
            role: user.role,
            issued_at: now,
            expires_at: now + self.config.session_ttl,
            factors: [Factor::Password, Factor::Totp].into_iter().collect(),
        })
    }

    /// Checks `action` for the session's user against the ledger state.
    /// Allowed requests come back as the unsigned transaction recording
    /// them; reads always produce an AccessRecord entry.
    pub fn authorize(
        &self,
        session: &AuthSession,
        action: RequestedAction<'_>,
        state: &LedgerState,
        now: SimTime,
    ) -> Result<TxDraft, IdentityError> {
        if !session.is_valid(now) {
            return Err(IdentityError::ExpiredSession);
        }
        let me = session.user.as_str();
        let ts = now.micros() / 1000;
        let deny = IdentityError::Denied;
        match action {
            RequestedAction::Read { patient, address } => {
                state.authorize_read(me, patient, &address).map_err(deny)?;
                Ok(TxDraft::access(me, patient, address, ts))
            }
            RequestedAction::Store { patient } => {
                state.authorize_write(me, patient).map_err(deny)?;
                // content address and envelope digest are filled in by the caller
                Ok(TxDraft::new(me, crate::ledger::Action::StoreRecord, patient, ts))
            }
            RequestedAction::Grant { grantee, scope } | RequestedAction::Revoke { grantee, scope } => {
                if session.role != Role::Patient {
                    return Err(deny(AccessDenied::RoleViolation));
                }
                if state.user(grantee).is_none() {
                    return Err(deny(AccessDenied::UnknownUser));
                }
                Ok(match action {
                    RequestedAction::Grant { .. } => TxDraft::grant(me, grantee, scope, ts),
                    _ => TxDraft::revoke(me, grantee, scope, ts),
                })
            }
        }
    }

    /// Raw TOTP secret for desk provisioning of an existing user.
    pub fn totp_secret(&self, id: &str) -> Option<&[u8]> {
        self.users.get(id).map(|u| u.totp_secret.as_ref())
    }
}
