//! Seedable RNG used by every randomized stage. One construction point keeps
//! runs byte-reproducible under a fixed seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeedRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeedRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a substream seed from a master seed and an index (bootstrap
/// resamples, per-review noise draws). SplitMix64 finalizer.
pub fn substream(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_same_stream() {
        let a: [u64; 4] = core::array::from_fn(|_| seeded(7).random());
        let b: [u64; 4] = core::array::from_fn(|_| seeded(7).random());
        // from_fn calls in order with fresh rngs each time; compare full draws
        let mut r1 = seeded(7);
        let mut r2 = seeded(7);
        for _ in 0..16 {
            assert_eq!(r1.random::<u64>(), r2.random::<u64>());
        }
        let _ = (a, b);
    }

    #[test]
    fn substreams_differ() {
        assert_ne!(substream(42, 0), substream(42, 1));
        assert_ne!(substream(42, 1), substream(43, 1));
        assert_eq!(substream(42, 5), substream(42, 5));
    }
}
