//! Seeded random streams.
//!
//! Every stochastic step draws from a ChaCha8 generator keyed by an explicit
//! seed. Independent stages of one computation use distinct stream ids of the
//! same seed so that adding draws to one stage never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub(crate) mod stream {
    pub const SUBSAMPLE: u64 = 0;
    pub const STACKING: u64 = 1;
    pub const LAYOUT: u64 = 2;
    pub const PSO: u64 = 3;
    pub const JITTER: u64 = 4;
    pub const SYNTH: u64 = 5;
    pub const BASELINE_INIT: u64 = 6;
    pub const SHUFFLE: u64 = 7;
    pub const NEGATIVE_SAMPLES: u64 = 8;
}

/// Generator for `seed` on the given stream.
pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
