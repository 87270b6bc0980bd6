//! PHC-format password verifiers (`$argon2id$v=19$m=..,t=..,p=..$salt$hash`).

use alloc::string::{String, ToString};
use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::{Algorithm, Argon2, Params, Version};

use super::kdf::{KdfCost, KdfParams, KEY_LEN, SALT_LEN};
use super::CryptoError;

pub fn hash_password(password: &[u8], params: &KdfParams) -> Result<String, CryptoError> {
    params.validate()?;
    let argon = Argon2::new(
        Algorithm::Argon2id,
        Version::V0x13,
        Params::new(params.cost.memory_kib, params.cost.time_cost, u32::from(params.cost.parallelism), Some(KEY_LEN))
            .map_err(|_| CryptoError::InvalidParams("rejected by argon2"))?,
    );
    let salt = SaltString::encode_b64(&params.salt).map_err(|_| CryptoError::KdfFailure)?;
    let hash = argon.hash_password(password, &salt).map_err(|_| CryptoError::KdfFailure)?;
    Ok(hash.to_string())
}

/// Recovers the cost parameters and salt embedded in a verifier.
pub fn parse_verifier(verifier: &str) -> Result<KdfParams, CryptoError> {
    let parsed = PasswordHash::new(verifier).map_err(|_| CryptoError::MalformedVerifier)?;
    if parsed.algorithm.as_str() != "argon2id" {
        return Err(CryptoError::MalformedVerifier);
    }
    let params = Params::try_from(&parsed).map_err(|_| CryptoError::MalformedVerifier)?;
    let mut salt_buf = [0u8; 64];
    let salt = parsed.salt.ok_or(CryptoError::MalformedVerifier)?.decode_b64(&mut salt_buf).map_err(|_| CryptoError::MalformedVerifier)?;
    let salt: [u8; SALT_LEN] = salt.try_into().map_err(|_| CryptoError::MalformedVerifier)?;
    let cost = KdfCost {
        memory_kib: params.m_cost(),
        time_cost: params.t_cost(),
        parallelism: u8::try_from(params.p_cost()).map_err(|_| CryptoError::MalformedVerifier)?,
    };
    cost.validate().map_err(|_| CryptoError::MalformedVerifier)?;
    Ok(cost.with_salt(salt))
}

pub fn verify_password(password: &[u8], verifier: &str) -> Result<bool, CryptoError> {
    parse_verifier(verifier)?;
    let parsed = PasswordHash::new(verifier).map_err(|_| CryptoError::MalformedVerifier)?;
    Ok(Argon2::default().verify_password(password, &parsed).is_ok())
}
