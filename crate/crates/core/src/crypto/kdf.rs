use argon2::{Algorithm, Argon2, AssociatedData, ParamsBuilder, Version};
use rand_core::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use super::CryptoError;

pub const SALT_LEN: usize = 16;
pub const KEY_LEN: usize = 32;

/// Upper bounds accepted when reading parameters back out of an envelope or
/// verifier, so hostile input cannot demand gigabytes or hours of work.
pub const MAX_MEMORY_KIB: u32 = 1 << 20;
pub const MAX_TIME_COST: u32 = 64;

/// Cost settings without a salt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfCost {
    pub memory_kib: u32,
    pub time_cost: u32,
    pub parallelism: u8,
}

impl Default for KdfCost {
    /// 64 MiB, 3 passes, 4 lanes.
    fn default() -> Self {
        KdfCost { memory_kib: 64 * 1024, time_cost: 3, parallelism: 4 }
    }
}

impl KdfCost {
    /// Cheap settings for simulations and tests. Not for real records.
    pub const fn light() -> Self {
        KdfCost { memory_kib: 64, time_cost: 1, parallelism: 1 }
    }

    pub fn validate(&self) -> Result<(), CryptoError> {
        if self.parallelism == 0 {
            return Err(CryptoError::InvalidParams("parallelism must be at least 1"));
        }
        if self.time_cost == 0 {
            return Err(CryptoError::InvalidParams("time cost must be at least 1"));
        }
        if self.memory_kib < 8 * u32::from(self.parallelism) {
            return Err(CryptoError::InvalidParams("memory cost below 8 KiB per lane"));
        }
        if self.memory_kib > MAX_MEMORY_KIB {
            return Err(CryptoError::InvalidParams("memory cost above 1 GiB"));
        }
        if self.time_cost > MAX_TIME_COST {
            return Err(CryptoError::InvalidParams("time cost above 64"));
        }
        Ok(())
    }

    pub fn with_salt(self, salt: [u8; SALT_LEN]) -> KdfParams {
        KdfParams { cost: self, salt }
    }

    pub fn fresh<R: RngCore + CryptoRng>(self, rng: &mut R) -> KdfParams {
        let mut salt = [0u8; SALT_LEN];
        rng.fill_bytes(&mut salt);
        self.with_salt(salt)
    }
}

/// Argon2id cost settings plus the salt they were used with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KdfParams {
    pub cost: KdfCost,
    pub salt: [u8; SALT_LEN],
}

impl KdfParams {
    pub fn memory_kib(&self) -> u32 {
        self.cost.memory_kib
    }

    pub fn time_cost(&self) -> u32 {
        self.cost.time_cost
    }

    pub fn parallelism(&self) -> u8 {
        self.cost.parallelism
    }

    pub fn validate(&self) -> Result<(), CryptoError> {
        self.cost.validate()
    }
}

/// 256-bit symmetric key. Never serialized; wiped on drop.
pub struct DerivedKey(Zeroizing<[u8; KEY_LEN]>);

impl DerivedKey {
    pub(crate) fn bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    /// Wraps raw key bytes, bypassing the KDF. Known-answer tests only.
    #[cfg(any(test, feature = "kat-hooks"))]
    pub fn from_raw(bytes: [u8; KEY_LEN]) -> Self {
        DerivedKey(Zeroizing::new(bytes))
    }

    #[cfg(any(test, feature = "kat-hooks"))]
    pub fn expose(&self) -> [u8; KEY_LEN] {
        *self.0
    }
}

impl PartialEq for DerivedKey {
    fn eq(&self, other: &Self) -> bool {
        self.0.iter().zip(other.0.iter()).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
    }
}

impl core::fmt::Debug for DerivedKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("DerivedKey(<redacted>)")
    }
}

/// Raw Argon2id (version 0x13) with optional secret and associated data.
/// `derive_key` is this with both empty; the extra inputs exist so the
/// published reference vectors can be reproduced.
pub fn argon2id_raw(
    password: &[u8],
    salt: &[u8],
    cost: KdfCost,
    secret: &[u8],
    associated_data: &[u8],
    out: &mut [u8],
) -> Result<(), CryptoError> {
    let mut builder = ParamsBuilder::new();
    builder.m_cost(cost.memory_kib).t_cost(cost.time_cost).p_cost(u32::from(cost.parallelism)).output_len(out.len());
    if !associated_data.is_empty() {
        builder.data(AssociatedData::new(associated_data).map_err(|_| CryptoError::KdfFailure)?);
    }
    let params = builder.build().map_err(|_| CryptoError::InvalidParams("rejected by argon2"))?;
    let ctx = if secret.is_empty() {
        Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
    } else {
        Argon2::new_with_secret(secret, Algorithm::Argon2id, Version::V0x13, params).map_err(|_| CryptoError::KdfFailure)?
    };
    ctx.hash_password_into(password, salt, out).map_err(|_| CryptoError::KdfFailure)
}

pub fn derive_key(password: &[u8], params: &KdfParams) -> Result<DerivedKey, CryptoError> {
    if password.is_empty() {
        return Err(CryptoError::EmptyPassword);
    }
    params.validate()?;
    let mut key = Zeroizing::new([0u8; KEY_LEN]);
    argon2id_raw(password, &params.salt, params.cost, &[], &[], key.as_mut())?;
    Ok(DerivedKey(key))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn params_invariants() {
        let ok = KdfCost { memory_kib: 32, time_cost: 1, parallelism: 4 };
        assert!(ok.validate().is_ok());
        let low_mem = KdfCost { memory_kib: 31, ..ok };
        assert!(matches!(low_mem.validate(), Err(CryptoError::InvalidParams(_))));
        assert!(KdfCost { time_cost: 0, ..ok }.validate().is_err());
        assert!(KdfCost { parallelism: 0, ..ok }.validate().is_err());
        assert!(KdfCost::default().validate().is_ok());
    }

    #[test]
    fn determinism_and_salt_separation() {
        let mut rng = seeded(11);
        let a = KdfCost::light().fresh(&mut rng);
        let b = KdfCost::light().fresh(&mut rng);
        assert_ne!(a.salt, b.salt);
        let ka1 = derive_key(b"pw", &a).unwrap();
        let ka2 = derive_key(b"pw", &a).unwrap();
        let kb = derive_key(b"pw", &b).unwrap();
        assert_eq!(ka1, ka2);
        assert_ne!(ka1, kb);
    }

    #[test]
    fn empty_password_rejected() {
        let p = KdfCost::light().with_salt([1; 16]);
        assert_eq!(derive_key(b"", &p).unwrap_err(), CryptoError::EmptyPassword);
    }
}
