//! Deterministic seed derivation.
//!
//! Every stochastic component in the crate draws from an explicit seed.
//! Sub-streams (per frame, per tree, per Monte Carlo run) derive their
//! seeds through `mix_seed` so that streams are independent yet fully
//! reproducible from a single base seed.

/// Derives a child seed from a base seed and a stream index.
///
/// SplitMix64 finalizer over the combined words; the same (base, index)
/// pair always yields the same child seed.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index)
        .wrapping_add(0x2545_f491_4f6c_dd1d);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
