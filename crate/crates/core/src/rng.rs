//! Seed derivation for independent, order-free random substreams.
//!
//! Every random draw in the engine comes from a ChaCha8 generator whose seed
//! is derived from a run seed plus a path of integers (stream tag, point id,
//! query index, ...). Two strategies that release the same point for the
//! same time therefore observe the same noise, regardless of the order in
//! which points were queried.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_RELEASE: u64 = 0x5245_4c45;
pub const STREAM_SUBSET: u64 = 0x5355_4253;
pub const STREAM_SPLIT: u64 = 0x5350_4c54;
pub const STREAM_FEATURES: u64 = 0x4645_4154;
pub const STREAM_LABELS: u64 = 0x4c41_4245;
pub const STREAM_PERMUTATION: u64 = 0x5045_524d;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream_rng(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}
