//! Deterministic seed derivation shared by the oracle backend and the
//! benchmark harness. Everything downstream of a seed must be reproducible
//! bit-for-bit, so seeds are mixed with a fixed integer hash rather than
//! `std::hash` (whose output is not stable across runs).

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of seed components into one stream seed.
pub(crate) fn derive_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x51_7c_c1_b7_27_22_0a_95u64;
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

/// A seeded RNG for the given components.
pub(crate) fn derive_rng(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}
