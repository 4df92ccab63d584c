//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! 64-bit value produced here, optionally with a stream index selected via
//! `set_stream`. Derived seeds are a pure function of their inputs, which is
//! what makes parallel and serial runs agree bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a path of integers into one seed: `s ← mix64(s + φ + part)` per part,
/// starting from the path length.
pub fn derive(parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(parts.len() as u64), |acc, &p| {
        mix64(acc.wrapping_add(GOLDEN).wrapping_add(p))
    })
}

/// Generator for `seed` on stream `stream`.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_is_order_sensitive_and_stable() {
        assert_eq!(derive(&[1, 2, 3]), derive(&[1, 2, 3]));
        assert_ne!(derive(&[1, 2, 3]), derive(&[1, 3, 2]));
        assert_ne!(derive(&[1, 2]), derive(&[1, 2, 0]));
        assert_ne!(derive(&[0]), derive(&[]));
    }

    #[test]
    fn streams_differ() {
        let a: u64 = rng(7, 0).random();
        let b: u64 = rng(7, 1).random();
        let c: u64 = rng(7, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
