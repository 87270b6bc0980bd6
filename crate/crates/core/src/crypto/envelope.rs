use aes_gcm::aead::AeadInPlace;
use aes_gcm::{Aes256Gcm, KeyInit, Nonce, Tag};
use alloc::vec::Vec;
use rand_core::{CryptoRng, RngCore};

use super::kdf::{derive_key, DerivedKey, KdfCost, KdfParams, SALT_LEN};
use super::CryptoError;
use crate::hash::Digest;

pub const ENVELOPE_VERSION: u8 = 1;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

/// version + memory + time + lanes + salt + nonce + length
const HEADER_LEN: usize = 1 + 4 + 4 + 1 + SALT_LEN + NONCE_LEN + 8;

/// One encrypted record.
///
/// Binary layout, little-endian:
/// `[u8 version][u32 memory_kib][u32 time_cost][u8 parallelism][16B salt]`
/// `[12B nonce][u64 ciphertext_len][ciphertext][16B tag]`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedEnvelope {
    pub version: u8,
    pub kdf: KdfParams,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl SealedEnvelope {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.ciphertext.len() + TAG_LEN
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.version);
        out.extend_from_slice(&self.kdf.cost.memory_kib.to_le_bytes());
        out.extend_from_slice(&self.kdf.cost.time_cost.to_le_bytes());
        out.push(self.kdf.cost.parallelism);
        out.extend_from_slice(&self.kdf.salt);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&(self.ciphertext.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < HEADER_LEN + TAG_LEN {
            return Err(CryptoError::MalformedEnvelope("too short"));
        }
        let version = bytes[0];
        if version != ENVELOPE_VERSION {
            return Err(CryptoError::MalformedEnvelope("unknown version"));
        }
        let le32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let cost = KdfCost { memory_kib: le32(1), time_cost: le32(5), parallelism: bytes[9] };
        let mut salt = [0u8; SALT_LEN];
        salt.copy_from_slice(&bytes[10..10 + SALT_LEN]);
        let mut nonce = [0u8; NONCE_LEN];
        nonce.copy_from_slice(&bytes[26..26 + NONCE_LEN]);
        let ct_len = u64::from_le_bytes(bytes[38..46].try_into().unwrap());
        let expected = (HEADER_LEN + TAG_LEN) as u64;
        if Some(bytes.len() as u64) != ct_len.checked_add(expected) {
            return Err(CryptoError::MalformedEnvelope("ciphertext length mismatch"));
        }
        let ct_end = HEADER_LEN + ct_len as usize;
        let mut tag = [0u8; TAG_LEN];
        tag.copy_from_slice(&bytes[ct_end..]);
        Ok(SealedEnvelope { version, kdf: cost.with_salt(salt), nonce, ciphertext: bytes[HEADER_LEN..ct_end].to_vec(), tag })
    }

    /// Digest of the serialized envelope, as recorded on the ledger.
    pub fn digest(&self) -> Digest {
        Digest::of(&self.to_bytes())
    }
}

/// Encrypts `plaintext` under a key derived from `password`, with a fresh
/// salt and nonce drawn from `rng`.
pub fn seal<R: RngCore + CryptoRng>(
    plaintext: &[u8],
    password: &[u8],
    cost: &KdfCost,
    associated_data: &[u8],
    rng: &mut R,
) -> Result<SealedEnvelope, CryptoError> {
    let kdf = cost.fresh(rng);
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let key = derive_key(password, &kdf)?;
    seal_inner(&key, kdf, nonce, plaintext, associated_data)
}

pub fn open(envelope: &SealedEnvelope, password: &[u8], associated_data: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if envelope.version != ENVELOPE_VERSION {
        return Err(CryptoError::MalformedEnvelope("unknown version"));
    }
    envelope.kdf.validate().map_err(|_| CryptoError::MalformedEnvelope("KDF parameters out of range"))?;
    let key = match derive_key(password, &envelope.kdf) {
        Ok(key) => key,
        Err(CryptoError::EmptyPassword) => return Err(CryptoError::AuthFailure),
        Err(e) => return Err(e),
    };
    open_inner(&key, envelope, associated_data)
}

fn seal_inner(
    key: &DerivedKey,
    kdf: KdfParams,
    nonce: [u8; NONCE_LEN],
    plaintext: &[u8],
    associated_data: &[u8],
) -> Result<SealedEnvelope, CryptoError> {
    let cipher = Aes256Gcm::new_from_slice(key.bytes()).map_err(|_| CryptoError::KdfFailure)?;
    let mut buf = plaintext.to_vec();
    let tag = cipher
        .encrypt_in_place_detached(Nonce::from_slice(&nonce), associated_data, &mut buf)
        .map_err(|_| CryptoError::MalformedEnvelope("plaintext too long"))?;
    Ok(SealedEnvelope { version: ENVELOPE_VERSION, kdf, nonce, ciphertext: buf, tag: tag.into() })
}

fn open_inner(key: &DerivedKey, envelope: &SealedEnvelope, associated_data: &[u8]) -> Result<Vec<u8>, CryptoError> {
    let cipher = Aes256Gcm::new_from_slice(key.bytes()).map_err(|_| CryptoError::KdfFailure)?;
    let mut buf = envelope.ciphertext.clone();
    cipher
        .decrypt_in_place_detached(Nonce::from_slice(&envelope.nonce), associated_data, &mut buf, Tag::from_slice(&envelope.tag))
        .map_err(|_| CryptoError::AuthFailure)?;
    Ok(buf)
}

/// Seals with an injected key and nonce. Known-answer tests only.
#[cfg(any(test, feature = "kat-hooks"))]
pub fn seal_with_key(
    key: &DerivedKey,
    kdf: KdfParams,
    nonce: [u8; NONCE_LEN],
    plaintext: &[u8],
    associated_data: &[u8],
) -> Result<SealedEnvelope, CryptoError> {
    seal_inner(key, kdf, nonce, plaintext, associated_data)
}

#[cfg(any(test, feature = "kat-hooks"))]
pub fn open_with_key(key: &DerivedKey, envelope: &SealedEnvelope, associated_data: &[u8]) -> Result<Vec<u8>, CryptoError> {
    open_inner(key, envelope, associated_data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    const AD: &[u8] = b"patient-7/record-1";

    fn sealed(plaintext: &[u8]) -> SealedEnvelope {
        seal(plaintext, b"correct horse", &KdfCost::light(), AD, &mut seeded(5)).unwrap()
    }

    #[test]
    fn round_trip_and_lengths() {
        let env = sealed(b"blood pressure 120/80");
        assert_eq!(env.ciphertext.len(), 21);
        assert_eq!(open(&env, b"correct horse", AD).unwrap(), b"blood pressure 120/80");
        let bytes = env.to_bytes();
        assert_eq!(bytes.len(), env.encoded_len());
        assert_eq!(SealedEnvelope::from_bytes(&bytes).unwrap(), env);
    }

    #[test]
    fn empty_plaintext() {
        let env = sealed(b"");
        assert!(env.ciphertext.is_empty());
        assert_eq!(open(&env, b"correct horse", AD).unwrap(), b"");
    }

    #[test]
    fn wrong_password_and_ad_fail_identically() {
        let env = sealed(b"x-ray");
        assert_eq!(open(&env, b"wrong", AD), Err(CryptoError::AuthFailure));
        assert_eq!(open(&env, b"correct horse", b"patient-8/record-1"), Err(CryptoError::AuthFailure));
        assert_eq!(open(&env, b"", AD), Err(CryptoError::AuthFailure));
    }

    #[test]
    fn flipped_ciphertext_bit_rejected() {
        let mut env = sealed(b"allergies: none");
        env.ciphertext[3] ^= 0x01;
        assert_eq!(open(&env, b"correct horse", AD), Err(CryptoError::AuthFailure));
    }

    #[test]
    fn malformed_inputs() {
        let env = sealed(b"abc");
        let mut bytes = env.to_bytes();
        assert!(matches!(SealedEnvelope::from_bytes(&bytes[..20]), Err(CryptoError::MalformedEnvelope(_))));
        bytes[0] = 2;
        assert_eq!(SealedEnvelope::from_bytes(&bytes), Err(CryptoError::MalformedEnvelope("unknown version")));
        let mut longer = env.to_bytes();
        longer.push(0);
        assert!(SealedEnvelope::from_bytes(&longer).is_err());
    }

    #[test]
    fn same_plaintext_seals_differently() {
        let mut rng = seeded(9);
        let a = seal(b"same", b"pw", &KdfCost::light(), AD, &mut rng).unwrap();
        let b = seal(b"same", b"pw", &KdfCost::light(), AD, &mut rng).unwrap();
        assert_ne!(a.ciphertext, b.ciphertext);
        assert_ne!(a.nonce, b.nonce);
        assert_ne!(a.kdf.salt, b.kdf.salt);
    }
}
