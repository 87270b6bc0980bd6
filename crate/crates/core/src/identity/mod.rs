//! User registration, two-factor authentication (password verifier plus a
//! time-based one-time code) and grant-based authorization.

mod registry;
mod totp;

pub use registry::{
    AuthFailureCounters, AuthSession, Enrollment, Factor, IdentityConfig, Registry, RequestedAction, StoredIdentity, UserIdentity,
};
pub use totp::{hotp, totp, totp_code, verify_totp, TOTP_DIGITS, TOTP_SECRET_LEN, TOTP_STEP_SECS};

use thiserror::Error;

use crate::crypto::CryptoError;
use crate::ledger::AccessDenied;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("user id already registered")]
    DuplicateId,
    #[error("user id must not be empty")]
    EmptyId,
    /// Unknown user, wrong password and wrong code are indistinguishable.
    #[error("authentication failed")]
    AuthFailed,
    #[error("session expired")]
    ExpiredSession,
    #[error("access denied: {0}")]
    Denied(AccessDenied),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}
