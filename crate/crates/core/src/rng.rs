//! Deterministic RNG stream derivation.
//!
//! Every randomized stage (generation, fold shuffling, missingness,
//! acceptance draws) owns an independent ChaCha8 stream keyed by the run
//! seed, a stage salt and optional per-item ids. Streams never depend on
//! iteration order, so parallel and sequential runs produce identical
//! output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage salts. Values are part of the output format: changing them changes
/// every downstream artifact.
pub mod salt {
    pub const GENERATOR: u64 = 0x67656e_01;
    pub const FOLDS: u64 = 0x666f6c_02;
    pub const MISSING: u64 = 0x6d6973_03;
    pub const ACCEPT: u64 = 0x616363_04;
}

/// SplitMix64 finalizer; the usual avalanche mix.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Mixes the run seed with a salt and a list of ids into a stream key.
pub fn mix(seed: u64, salt: u64, ids: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(salt));
    for &id in ids {
        h = splitmix64(h ^ splitmix64(id));
    }
    h
}

/// A ChaCha8 stream for `(seed, salt, ids)`.
pub fn stream(seed: u64, salt: u64, ids: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, salt, ids))
}

/// FNV-1a over a string; used to key per-entity draws off names.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
