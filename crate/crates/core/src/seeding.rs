//! Labelled sub-seed derivation.
//!
//! A stochastic site never shares a generator with another site. Instead it
//! derives its own seed from `(master, label, indices...)` by chaining
//! SplitMix64 finalisers, then seeds a ChaCha8 stream from it. This keeps a
//! counterfactual query for `(unit, treatment)` answerable in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every stochastic site in the crate.
pub type Rng = ChaCha8Rng;

#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed for the site named `label` at position `indices`.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for b in label.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    // separator so ("ab", [1]) and ("a", [b'b', 1]) cannot collide trivially
    h = splitmix64(h ^ 0xFF);
    for &i in indices {
        h = splitmix64(h ^ i);
    }
    h
}

/// Seeded generator for a labelled site.
pub fn stream(master: u64, label: &str, indices: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, label, indices))
}
