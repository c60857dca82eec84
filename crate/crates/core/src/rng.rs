//! Seeded random streams.
//!
//! Every random quantity in a run is drawn from xoshiro256++ (Blackman and
//! Vigna), seeded through SplitMix64 exactly as `rand_xoshiro` does for
//! `seed_from_u64`. Uniform reals in `[0, 1)` take the top 53 bits of a
//! 64-bit output. A run derives independent sub-streams from one seed by
//! applying the generator's 2^128-step jump function `index` times, so the
//! objective, the initial state and the compressor noise never share draws.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

/// Named sub-streams of one experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Objective = 0,
    InitialState = 1,
    Compressor = 2,
    Certification = 3,
    Graph = 4,
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = seeded(seed);
    for _ in 0..which as u32 {
        rng.jump();
    }
    rng
}
