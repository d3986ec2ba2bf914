//! Deterministic seed derivation.
//!
//! Every randomized stage in the crate draws from a ChaCha8 stream whose seed
//! is derived from one user-supplied root seed, a stage name, and an index.
//! Derivation is pure integer arithmetic, so the same root seed reproduces the
//! same streams on every platform.

/// Derives a stage seed from a root seed, a stage label, and an index.
///
/// The label is folded in with FNV-1a and the result is passed through a
/// splitmix64-style finalizer, so nearby roots and indices map to unrelated
/// seeds and distinct stages never share a stream.
pub fn sub_seed(root: u64, stage: &str, index: u64) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

    let mut hash = FNV_OFFSET;
    for byte in stage.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash ^= root.rotate_left(17);
    hash = hash.wrapping_mul(FNV_PRIME);
    hash ^= index;

    // splitmix64 finalizer
    let mut z = hash.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
