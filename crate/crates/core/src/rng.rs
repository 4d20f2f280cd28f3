//! Seeding.
//!
//! All randomness flows from `u64` seeds through [`SimRng`]. Independent
//! substreams are derived with [`split_seed`]:
//!
//! ```text
//! split_seed(seed, index) = splitmix64(seed ^ splitmix64(index))
//! ```
//!
//! Experiment components are identified by a stable path label hashed with
//! FNV-1a ([`component_index`]), so adding a component never shifts the
//! substreams of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used by every stream, truncation law and chain.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// One round of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn split_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// FNV-1a hash of a component path such as `"factory.inner.stream"`.
pub fn component_index(path: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in path.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed of a named component under a parent seed.
pub fn component_seed(seed: u64, path: &str) -> u64 {
    split_seed(seed, component_index(path))
}

/// Uniform draw on the open interval (0, 1).
pub(crate) fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
