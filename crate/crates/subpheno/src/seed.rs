//! Deterministic seed derivation.
//!
//! Every parallel task (restart, fold, bootstrap replicate, tree) gets its
//! own RNG stream derived from the master seed and its coordinates, so
//! results are identical regardless of scheduling order or thread count.

/// SplitMix64 finalizer; good avalanche, stable across platforms.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a coordinate path.
///
/// `derive(s, &[a, b])` differs from `derive(s, &[b, a])` and from
/// `derive(derive(s, &[a]), &[])`; collisions across distinct paths are as
/// unlikely as SplitMix64 collisions.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0x6A09_E667_F3BC_C909);
    for (i, part) in path.iter().enumerate() {
        state = splitmix64(state ^ part.wrapping_add(0x100 + i as u64));
    }
    state
}
