//! Named random sub-streams derived from one user seed.
//!
//! Each stream is a ChaCha8 generator keyed by
//! `SHA-256(seed as 8 little-endian bytes || name as UTF-8)`, so adding a
//! new consumer never shifts the draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const RENEWAL: &str = "renewal";
pub const COEFFICIENTS: &str = "coefficients";
pub const RESIDUALS: &str = "residuals";

pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Seed for replicate `index` of a batch started from `seed`.
pub fn replicate_seed(seed: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(b"replicate");
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_stable_and_distinct() {
        let a: u64 = substream(42, RENEWAL).random();
        let b: u64 = substream(42, RENEWAL).random();
        let c: u64 = substream(42, RESIDUALS).random();
        let d: u64 = substream(43, RENEWAL).random();
        assert_eq!(a, b);
        assert!(a != c && a != d);
    }

    #[test]
    fn key_matches_independent_digest() {
        // Oracle: the key is the plain SHA-256 of the documented byte string.
        let mut bytes = 7u64.to_le_bytes().to_vec();
        bytes.extend_from_slice(b"coefficients");
        let key: [u8; 32] = Sha256::digest(&bytes).into();
        let mut x = ChaCha8Rng::from_seed(key);
        let mut y = substream(7, COEFFICIENTS);
        assert_eq!(x.random::<u64>(), y.random::<u64>());
    }

    #[test]
    fn replicate_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| replicate_seed(1, i)).collect();
        assert_eq!(s.len(), 1000);
    }
}
