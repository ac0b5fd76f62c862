//! Deterministic RNG sub-streams.
//!
//! Every random draw in a simulation comes from a stream keyed by
//! `(master seed, trial, purpose)`, so results do not depend on the order in
//! which trials are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Symbols = 1,
    RadarNoise = 2,
    CommNoise = 3,
    CommGains = 4,
    Scenario = 5,
    SsrOffsets = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(seed, trial, purpose)`.
pub fn stream(seed: u64, trial: u64, purpose: Stream) -> SimRng {
    sub_stream(seed, trial, purpose, 0)
}

/// Stream for `(seed, trial, purpose, index)`, e.g. one per SSR solver.
pub fn sub_stream(seed: u64, trial: u64, purpose: Stream, index: u64) -> SimRng {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ trial.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    h = splitmix64(h ^ (purpose as u64).wrapping_mul(0xA076_1D64_78BD_642F));
    h = splitmix64(h ^ index.wrapping_mul(0xE703_7ED1_A0B4_28DB));
    ChaCha8Rng::seed_from_u64(h)
}

#[cfg(test)]
pub(crate) fn test_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
