//! Seed derivation. Every random draw in the crate goes through ChaCha8 so
//! streams are identical across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream tag and index (splitmix64 finalizer).
pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z =
        seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index.wrapping_mul(0xbf58_476d_1ce4_e5b9).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) mod stream {
    pub const EPOCH: u64 = 1;
    pub const PHANTOM: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const BALANCE: u64 = 4;
    pub const INIT: u64 = 5;
}
