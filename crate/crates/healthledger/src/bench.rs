//! Wall-clock seal/open timings on the local machine.

use std::time::Instant;

use healthledger_core::crypto::{open, seal, CryptoError, KdfCost, SealedEnvelope};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub size_bytes: usize,
    pub iterations: u32,
    /// Mean over iterations, key derivation included.
    pub seal_mean_ms: f64,
    pub open_mean_ms: f64,
    pub seal_mib_per_s: f64,
    pub open_mib_per_s: f64,
}

/// Parses sizes such as `512`, `64K`, `4M` (binary multiples).
pub fn parse_size(s: &str) -> Result<usize, String> {
    let s = s.trim();
    let (digits, mult) = match s.as_bytes().last() {
        Some(b'k' | b'K') => (&s[..s.len() - 1], 1024),
        Some(b'm' | b'M') => (&s[..s.len() - 1], 1024 * 1024),
        _ => (s, 1),
    };
    let n: usize = digits.parse().map_err(|_| format!("bad size {s:?}"))?;
    n.checked_mul(mult).filter(|&v| v > 0).ok_or_else(|| format!("bad size {s:?}"))
}

pub fn bench_crypto(sizes: &[usize], iterations: u32, kdf: KdfCost) -> Result<Vec<BenchRow>, CryptoError> {
    let iterations = iterations.max(1);
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut plaintext = vec![0u8; size];
        OsRng.fill_bytes(&mut plaintext);
        let (mut seal_s, mut open_s) = (0.0, 0.0);
        for _ in 0..iterations {
            let t = Instant::now();
            let env = seal(&plaintext, b"bench-password", &kdf, b"bench", &mut OsRng)?;
            let bytes = env.to_bytes();
            seal_s += t.elapsed().as_secs_f64();
            let t = Instant::now();
            let back = open(&SealedEnvelope::from_bytes(&bytes)?, b"bench-password", b"bench")?;
            open_s += t.elapsed().as_secs_f64();
            assert_eq!(back.len(), size);
        }
        let (seal_mean, open_mean) = (seal_s / iterations as f64, open_s / iterations as f64);
        let mib = size as f64 / (1024.0 * 1024.0);
        rows.push(BenchRow {
            size_bytes: size,
            iterations,
            seal_mean_ms: seal_mean * 1e3,
            open_mean_ms: open_mean * 1e3,
            seal_mib_per_s: mib / seal_mean,
            open_mib_per_s: mib / open_mean,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_parse_with_binary_suffixes() {
        assert_eq!(parse_size("512"), Ok(512));
        assert_eq!(parse_size("64K"), Ok(65536));
        assert_eq!(parse_size("2m"), Ok(2 * 1024 * 1024));
        assert!(parse_size("0").is_err() && parse_size("x").is_err() && parse_size("").is_err());
    }

    #[test]
    fn bench_rows_cover_every_size() {
        let rows = bench_crypto(&[1, 4096], 2, KdfCost::light()).unwrap();
        assert_eq!(rows.iter().map(|r| r.size_bytes).collect::<Vec<_>>(), [1, 4096]);
        assert!(rows.iter().all(|r| r.seal_mean_ms > 0.0 && r.open_mean_ms > 0.0));
    }
}
