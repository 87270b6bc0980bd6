//! Record encryption: a memory-hard password KDF (Argon2id) feeding
//! AES-256-GCM, packaged as a self-describing [`SealedEnvelope`].
//!
//! The envelope carries everything needed to decrypt except the password
//! and the associated data, which binds the ciphertext to its owner and
//! record identity.

mod envelope;
mod kdf;
mod verifier;

pub use envelope::{open, seal, SealedEnvelope, ENVELOPE_VERSION, NONCE_LEN, TAG_LEN};
pub use kdf::{argon2id_raw, derive_key, DerivedKey, KdfCost, KdfParams, KEY_LEN, SALT_LEN};
pub use verifier::{hash_password, parse_verifier, verify_password};

#[cfg(any(test, feature = "kat-hooks"))]
pub use envelope::{open_with_key, seal_with_key};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("invalid KDF parameters: {0}")]
    InvalidParams(&'static str),
    #[error("password must not be empty")]
    EmptyPassword,
    #[error("key derivation failed")]
    KdfFailure,
    /// Wrong password, tampered bytes or mismatched associated data.
    #[error("authentication failed")]
    AuthFailure,
    #[error("malformed envelope: {0}")]
    MalformedEnvelope(&'static str),
    #[error("malformed password verifier")]
    MalformedVerifier,
}
