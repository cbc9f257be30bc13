//! Seed plumbing. Every random stream in the crate is derived from one master
//! seed plus a stable label, so results never depend on call order elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    use std::hash::Hasher;
    let mut h = fnv::FnvHasher::default();
    h.write(label.as_bytes());
    h.finish()
}

/// Derive a child seed from a master seed and a stream label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    splitmix64(master ^ splitmix64(label_hash(label)))
}

/// Derive the seed of the `index`-th member of an indexed family (bootstrap
/// resamples, permutation draws). Independent of evaluation order.
pub fn derive_indexed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(derive_seed(master, label) ^ splitmix64(index.wrapping_add(1)))
}

pub fn rng_for(master: u64, label: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(master, label))
}

pub fn rng_indexed(master: u64, label: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive_indexed(master, label, index))
}
