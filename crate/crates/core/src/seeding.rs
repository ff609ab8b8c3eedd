//! Deterministic seed derivation for nested Monte-Carlo stages.
//!
//! Every randomized computation in this crate takes a `u64` seed and derives
//! the randomness of its sub-stages (replications, perturbation samples,
//! calibration replicates) from that seed and a stage index. Results are
//! therefore reproducible bit for bit, independent of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer: a bijective mixer with good avalanche behaviour.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a stage tag.
///
/// Distinct `(base, tag)` pairs give statistically unrelated child seeds, so
/// nested stages (for example one seed per replication, then one per method)
/// never share random streams.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    splitmix64(base ^ splitmix64(tag))
}

/// RNG for one indexed draw within a stage.
///
/// Each index gets its own ChaCha stream of the same keyed cipher, so draw
/// `i` is the same whether samples are evaluated serially or in parallel.
pub fn indexed_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
