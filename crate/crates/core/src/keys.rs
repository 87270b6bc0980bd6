//! Node and user signing keys (Ed25519) and the validator set that every
//! consensus participant shares.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand_core::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::{hex_array, to_hex, Digest};

/// Index of a replica / storage node in the simulated cluster.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; 64]);

impl Signature {
    pub const EMPTY: Signature = Signature([0u8; 64]);
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", to_hex(&self.0[..4]))
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        hex_array::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        hex_array::deserialize(d).map(Signature)
    }
}

/// A validated Ed25519 public key.
#[derive(Clone, Copy)]
pub struct PublicKey(VerifyingKey);

impl PublicKey {
    pub fn from_bytes(bytes: &[u8; 32]) -> Option<Self> {
        VerifyingKey::from_bytes(bytes).ok().map(PublicKey)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    /// Strict verification: rejects non-canonical encodings and small-order keys.
    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
        self.0.verify_strict(message, &sig).is_ok()
    }

    pub fn encode(&self, w: &mut Writer) {
        w.fixed(self.0.as_bytes());
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let raw: [u8; 32] = r.array()?;
        PublicKey::from_bytes(&raw).ok_or(DecodeError::Invalid("public key"))
    }
}

impl PartialEq for PublicKey {
    fn eq(&self, other: &Self) -> bool {
        self.0.as_bytes() == other.0.as_bytes()
    }
}

impl Eq for PublicKey {}

impl PartialOrd for PublicKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PublicKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.as_bytes().cmp(other.0.as_bytes())
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", to_hex(&self.0.as_bytes()[..4]))
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        hex_array::serialize(self.0.as_bytes(), s)
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw: [u8; 32] = hex_array::deserialize(d)?;
        PublicKey::from_bytes(&raw).ok_or_else(|| serde::de::Error::custom("invalid public key"))
    }
}

/// Private signing key. Deterministic signatures; zeroized on drop.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        KeyPair { signing: SigningKey::from_bytes(&seed) }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(seed)
    }

    pub fn seed(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key())
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public()).finish_non_exhaustive()
    }
}

/// Public keys of every replica, indexed by [`NodeId`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidatorSet {
    keys: Vec<PublicKey>,
}

impl ValidatorSet {
    pub fn new(keys: Vec<PublicKey>) -> Self {
        ValidatorSet { keys }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key(&self, node: NodeId) -> Option<&PublicKey> {
        self.keys.get(node.index())
    }

    pub fn keys(&self) -> &[PublicKey] {
        &self.keys
    }

    pub fn verify(&self, node: NodeId, message: &[u8], signature: &Signature) -> bool {
        self.key(node).is_some_and(|k| k.verify(message, signature))
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u32(self.keys.len() as u32);
        for k in &self.keys {
            k.encode(w);
        }
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let n = r.count(32)?;
        let keys = (0..n).map(|_| PublicKey::decode(r)).collect::<Result<_, _>>()?;
        Ok(ValidatorSet { keys })
    }

    pub fn digest(&self) -> Digest {
        let mut w = Writer::new();
        self.encode(&mut w);
        Digest::of(&w.finish())
    }
}

/// Deterministic key material for an `n`-replica cluster.
pub fn cluster_keys<R: RngCore + CryptoRng>(n: usize, rng: &mut R) -> (Vec<KeyPair>, ValidatorSet) {
    let pairs: Vec<KeyPair> = (0..n).map(|_| KeyPair::generate(rng)).collect();
    let set = ValidatorSet::new(pairs.iter().map(KeyPair::public).collect());
    (pairs, set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn sign_and_verify() {
        let kp = KeyPair::generate(&mut seeded(3));
        let sig = kp.sign(b"hello");
        assert!(kp.public().verify(b"hello", &sig));
        assert!(!kp.public().verify(b"hellp", &sig));
        let mut bad = sig;
        bad.0[0] ^= 1;
        assert!(!kp.public().verify(b"hello", &bad));
    }

    #[test]
    fn signing_is_deterministic() {
        let kp = KeyPair::from_seed([9; 32]);
        assert_eq!(kp.sign(b"m"), kp.sign(b"m"));
        assert_eq!(KeyPair::from_seed(kp.seed()).public(), kp.public());
    }
}
