//! Deterministic seed plumbing.
//!
//! Every random component takes a `u64` seed; experiment-level seeds are split
//! into independent per-component streams with [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named sub-streams of an experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Suite = 1,
    Data = 2,
    Model = 3,
    Defense = 4,
    Noise = 5,
    Bandit = 6,
}

/// splitmix64 finalizer over (seed, stream).
pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((stream as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
