//! Deterministic stream derivation.
//!
//! Every randomized stage (bootstrap + tree growth, fold shuffling,
//! synthetic generation, permutation importance, cross-validation) runs on
//! its own `ChaCha8Rng` whose seed is derived from the master seed, a
//! domain constant, and the stage index. Derivation is the SplitMix64
//! finalizer applied twice: `mix(mix(master + domain) + index)`. `mix` is a
//! bijection on u64, so for a fixed master seed and domain, distinct
//! indices always receive distinct stream seeds. This makes training
//! order-independent: tree `t` sees the same stream whether trees are grown
//! sequentially, in parallel, or as part of a larger ensemble.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain constant for per-tree streams (bootstrap draws, then mtry draws).
pub const DOMAIN_TREE: u64 = 0x7472_6565; // "tree"
/// Domain constant for fold-assignment shuffles.
pub const DOMAIN_FOLDS: u64 = 0x666f_6c64; // "fold"
/// Domain constant for synthetic dataset generation.
pub const DOMAIN_SYNTH: u64 = 0x7379_6e74; // "synt"
/// Domain constant for permutation-importance shuffles.
pub const DOMAIN_PERM: u64 = 0x7065_726d; // "perm"
/// Domain constant for per-fold forest seeds in cross-validation.
pub const DOMAIN_CV: u64 = 0x6376_6c64; // "cvld"

/// SplitMix64 finalizer. Bijective on u64.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stream seed from `(master, domain, index)`.
pub fn derive_seed(master: u64, domain: u64, index: u64) -> u64 {
    mix(mix(master.wrapping_add(domain)).wrapping_add(index))
}

/// Derive a stream seed from `(master, domain, index, sub)`, used where a
/// stage fans out twice (e.g. permutation importance per tree and feature).
pub fn derive_seed2(master: u64, domain: u64, index: u64, sub: u64) -> u64 {
    mix(derive_seed(master, domain, index).wrapping_add(sub))
}

/// A `ChaCha8Rng` on the stream for `(master, domain, index)`.
pub fn stream(master: u64, domain: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, domain, index))
}

/// A `ChaCha8Rng` on the stream for `(master, domain, index, sub)`.
pub fn stream2(master: u64, domain: u64, index: u64, sub: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed2(master, domain, index, sub))
}
