//! Keyed random sub-streams.
//!
//! Every random quantity in a run is drawn from a stream identified by the
//! master seed plus a tuple of integer keys (domain tag, round, learner...).
//! Streams are independent of each other and of generation order, so adding a
//! learner or reordering work never changes the values another stream sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Domain tags separating the sub-stream families.
pub mod tag {
    pub const GRAPH: u64 = 0x6772_6170_6800_0001;
    pub const ADVERSARY: u64 = 0x6164_7665_7200_0002;
    pub const LEARNER: u64 = 0x6c65_6172_6e00_0003;
    pub const MEMBER: u64 = 0x6d65_6d62_6500_0004;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 64-bit sub-seed from a seed and a key path.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(seed: u64, keys: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, keys))
}
