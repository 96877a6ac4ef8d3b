//! CPU-bound delays made of pseudo-random number generation.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generates `count` random numbers from `seed` and folds them together.
pub fn generate(seed: u64, count: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0u64;
    for _ in 0..count {
        acc = acc.wrapping_add(rng.gen::<u64>() >> 32);
    }
    acc
}

/// Generates random numbers until `us` microseconds have passed.
pub fn burn_for(seed: u64, us: u64) -> u64 {
    let end = Instant::now() + Duration::from_micros(us);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0u64;
    while Instant::now() < end {
        for _ in 0..64 {
            acc = acc.wrapping_add(rng.gen::<u64>() >> 32);
        }
    }
    acc
}
