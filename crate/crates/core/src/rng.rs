//! Derived random streams.
//!
//! Every stochastic decision draws from a ChaCha8 stream whose seed is a
//! splitmix64 fold of the run seed and the coordinates of the decision, so
//! results never depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Domain tags keep streams for different purposes apart.
pub mod tag {
    pub const USER_STEP: u64 = 0x5553_4552_5354_4550;
    pub const TRAIN: u64 = 0x5452_4149_4e00_0001;
    pub const SWEEP: u64 = 0x5357_4545_5000_0001;
    pub const METRICS: u64 = 0x4d45_5452_4943_0001;
    pub const SYNTH: u64 = 0x5359_4e54_4800_0001;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `seed`.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, parts: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, parts))
}
