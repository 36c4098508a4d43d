//! Deterministic seed derivation. Every stochastic replicate (Monte Carlo,
//! bootstrap, permutation) owns an RNG stream derived from an absolute key,
//! never from execution order, so results are identical at any parallelism.

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Fold any number of components into one seed.
pub(crate) fn derive_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x9E3779B97F4A7C15_u64;
    for &part in parts {
        acc = splitmix64(acc ^ part);
    }
    acc
}

/// FNV-1a over a canonical byte string; stable across platforms and runs.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xCBF29CE484222325_u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001B3);
    }
    hash
}
