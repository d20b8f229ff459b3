//! Counter-based hashing for position-keyed randomness.

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a key tuple.
pub fn mix(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0x243f_6a88_85a3_08d3, |h, &k| splitmix64(h ^ splitmix64(k)))
}

/// Hash of a key tuple mapped uniformly into `[0, 1)`.
pub fn hash_unit(keys: &[u64]) -> f64 {
    (mix(keys) >> 11) as f64 / (1u64 << 53) as f64
}
