//! Seed-derived random substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by
//! `(seed, purpose)` and positioned on stream `index`, where `index` is the
//! path (or check) number. A path therefore sees the same draws no matter
//! which worker evaluates it, and changing `rho` while keeping the seed
//! reuses the same draws (common random numbers).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags separating independent uses of one seed.
pub mod purpose {
    pub const SIMULATE: u64 = 0x5349_4d55;
    pub const POSTERIOR: u64 = 0x504f_5354;
    /// Inner draws shared by the nested information and estimation estimators.
    pub const INNER: u64 = 0x4d49_494e;
    pub const FISHER: u64 = 0x4649_5348;
    pub const CT_PATHS: u64 = 0x4354_5041;
    pub const CT_INNER: u64 = 0x4354_494e;
    pub const VALIDATION: u64 = 0x5641_4c49;
    pub const CHECK: u64 = 0x4348_4543;
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for the `index`-th sub-experiment of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(purpose::CHECK)))
}

pub fn substream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(purpose)));
    rng.set_stream(index);
    rng
}
