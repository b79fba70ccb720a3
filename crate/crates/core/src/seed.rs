//! Seed lineage.
//!
//! Every random stream in a simulation is derived from a master seed and a
//! path of integers (cell index, run index, stream tag, node index, ...), so
//! that any single run can be replayed from the seed printed next to it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used when splitting a run seed into independent streams.
pub mod stream {
    pub const TOPOLOGY: u64 = 1;
    pub const CHANNELS: u64 = 2;
    pub const OCCUPANCY: u64 = 3;
    pub const HOPPING: u64 = 4;
}

/// The RNG used throughout the simulator.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `path` into `master` one component at a time.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
