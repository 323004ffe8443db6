//! Seed splitting.
//!
//! Every random stream in an experiment is derived from one master seed. A
//! stream is identified by a path of integer labels (role, cell, episode, ...)
//! folded through the SplitMix64 finalizer, so sibling streams never share
//! state and adding a stream never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random generator used everywhere in the crate.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a label.
pub fn derive(seed: u64, label: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ label.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Derives a child seed from a path of labels.
pub fn derive_path(seed: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(seed, |s, &l| derive(s, l))
}

/// Hashes a string label into a `u64`, for naming streams by role.
pub fn label(name: &str) -> u64 {
    name.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01B3)
    })
}

pub fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn rng_at(seed: u64, labels: &[u64]) -> SimRng {
    rng(derive_path(seed, labels))
}
