//! Seeded random streams.
//!
//! Every stochastic step draws from its own PCG-XSH-RR 64/32 generator
//! (64-bit state) whose seed is a SplitMix64 mix of the run seed and a tuple
//! of integer tags, e.g. `(seed, SELECT, epoch, image)`. Results therefore
//! never depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_pcg::Pcg32;

pub type StreamRng = Pcg32;

pub const STREAM_SYNTH: u64 = 1;
pub const STREAM_INIT: u64 = 2;
pub const STREAM_SHUFFLE: u64 = 3;
pub const STREAM_SELECT: u64 = 4;
pub const STREAM_SPLIT: u64 = 5;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(seed: u64, tags: &[u64]) -> StreamRng {
    Pcg32::seed_from_u64(stream_seed(seed, tags))
}
