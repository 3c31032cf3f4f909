//! Seed handling.
//!
//! Every random decision in a run descends from one 64-bit master seed. A
//! sample's stream seed is `mix(master ^ mix(index + STREAM_SALT))`, where
//! `mix` is the SplitMix64 finalizer. Because the derived seed depends only
//! on `(master, index)`, samples can be generated in any order or in
//! parallel and still come out bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

const STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(master ^ mix(index.wrapping_add(STREAM_SALT)))
}

/// Seed for a named sub-stream, e.g. `derive_labeled(seed, "dark")`.
pub fn derive_labeled(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, then the usual derivation.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    derive_seed(master, h)
}

pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
