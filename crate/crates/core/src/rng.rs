//! Deterministic RNG substreams keyed by `(seed, index, role)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Roles keep streams for different purposes disjoint.
pub mod role {
    pub const EVENTS: u64 = 1;
    pub const SHARED_BACKGROUND: u64 = 2;
    pub const PROCESS_BACKGROUND: u64 = 0x100;
    pub const JITTER: u64 = 3;
    pub const MCMC: u64 = 4;
    pub const REPLICATION: u64 = 5;
    pub const GOF: u64 = 6;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes the three keys so nearby inputs give unrelated seeds.
pub fn substream_seed(seed: u64, index: u64, role: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ index) ^ role.rotate_left(32))
}

pub fn substream(seed: u64, index: u64, role: u64) -> StreamRng {
    StreamRng::seed_from_u64(substream_seed(seed, index, role))
}
