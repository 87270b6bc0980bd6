//! Seeded randomness. Every simulation stream is a ChaCha20 generator so a
//! seed pins the whole run.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

pub use rand_chacha::ChaCha20Rng as SimRng;
pub use rand_core::{CryptoRng, RngCore};

pub fn seeded(seed: u64) -> SimRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Derives an independent child stream, so adding draws to one subsystem
/// does not shift the draws seen by another.
pub fn fork(parent: &mut SimRng, label: u64) -> SimRng {
    let mut seed = [0u8; 32];
    parent.fill_bytes(&mut seed);
    seed[..8].iter_mut().zip(label.to_le_bytes()).for_each(|(s, l)| *s ^= l);
    ChaCha20Rng::from_seed(seed)
}

/// Exponentially distributed draw with the given mean.
pub fn exponential<R: RngCore>(rng: &mut R, mean: f64) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -mean * libm::log(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = seeded(7);
        let mut b = seeded(7);
        assert_eq!(a.next_u64(), b.next_u64());
        let mut fa = fork(&mut a, 1);
        let mut fb = fork(&mut b, 1);
        assert_eq!(fa.next_u64(), fb.next_u64());
    }

    #[test]
    fn exponential_mean_is_close() {
        let mut rng = seeded(1);
        let n = 20_000;
        let mean = (0..n).map(|_| exponential(&mut rng, 5.0)).sum::<f64>() / n as f64;
        assert!((mean - 5.0).abs() < 0.2, "{mean}");
    }
}
