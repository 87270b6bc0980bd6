use hmac::{Hmac, Mac};
use sha1::Sha1;

pub const TOTP_SECRET_LEN: usize = 20;
pub const TOTP_STEP_SECS: u64 = 30;
pub const TOTP_DIGITS: u32 = 6;

/// HMAC-SHA1 one-time code for `counter` with dynamic truncation.
pub fn hotp(secret: &[u8], counter: u64, digits: u32) -> u32 {
    let mut mac = Hmac::<Sha1>::new_from_slice(secret).expect("HMAC accepts any key length");
    mac.update(&counter.to_be_bytes());
    let h = mac.finalize().into_bytes();
    let offset = (h[19] & 0x0f) as usize;
    let bin = u32::from_be_bytes([h[offset] & 0x7f, h[offset + 1], h[offset + 2], h[offset + 3]]);
    bin % 10u32.pow(digits)
}

/// Time-based code at Unix time `unix_secs` with a 30 second step.
pub fn totp(secret: &[u8], unix_secs: u64, digits: u32) -> u32 {
    hotp(secret, unix_secs / TOTP_STEP_SECS, digits)
}

/// Zero-padded six-digit code.
pub fn totp_code(secret: &[u8], unix_secs: u64) -> alloc::string::String {
    alloc::format!("{:06}", totp(secret, unix_secs, TOTP_DIGITS))
}

/// Accepts a six-digit code within `skew_steps` steps of `unix_secs`.
pub fn verify_totp(secret: &[u8], code: &str, unix_secs: u64, skew_steps: u64) -> bool {
    if code.len() != TOTP_DIGITS as usize || !code.bytes().all(|b| b.is_ascii_digit()) {
        return false;
    }
    let Ok(value) = code.parse::<u32>() else { return false };
    let step = unix_secs / TOTP_STEP_SECS;
    let mut ok = false;
    for s in step.saturating_sub(skew_steps)..=step.saturating_add(skew_steps) {
        ok |= hotp(secret, s, TOTP_DIGITS) == value;
    }
    ok
}
