//! Reproducible seed derivation.
//!
//! Every random stream is a ChaCha8 generator keyed by a 64-bit seed derived
//! from `(base_seed, drop_index, stream)` with SplitMix64 finalization:
//!
//! ```text
//! seed = mix(mix(mix(base_seed) ^ drop_index) ^ stream)
//! ```
//!
//! so drops can be generated in any order or concurrently.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tag for user placement.
pub const STREAM_PLACEMENT: u64 = 0x706c_6163;
/// Stream tag for channel realizations.
pub const STREAM_CHANNEL: u64 = 0x6368_616e;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base_seed: u64, drop_index: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ drop_index) ^ stream)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
