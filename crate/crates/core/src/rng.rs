//! Seeding helpers.
//!
//! All randomness goes through [`ChaCha8Rng`], whose output stream is fixed
//! by its seed on every platform. Independent streams are carved out of one
//! user seed with [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `stream` of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(mix64(seed) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in `[0, 1)` determined entirely by `(seed, key)`.
pub fn keyed_uniform(seed: u64, key: u64) -> f64 {
    (derive_seed(seed, key) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Index of the bucket `u` falls into when `[0, 1)` is cut by the cumulative
/// sums of `weights`. Rounding slack past the last bucket lands on the last
/// nonzero weight.
pub fn sample_categorical(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (j, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_nonzero = j;
            acc += w;
            if u < acc {
                return j;
            }
        }
    }
    last_nonzero
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_streams_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn keyed_uniform_in_unit_interval() {
        for k in 0..10_000 {
            let u = keyed_uniform(42, k);
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn categorical_skips_zero_weights() {
        let w = [0.0, 0.5, 0.0, 0.5];
        assert_eq!(sample_categorical(&w, 0.0), 1);
        assert_eq!(sample_categorical(&w, 0.49), 1);
        assert_eq!(sample_categorical(&w, 0.5), 3);
        assert_eq!(sample_categorical(&w, 0.999_999_999), 3);
        assert_eq!(sample_categorical(&[0.3, 0.7, 0.0], 1.0), 1);
    }
}
