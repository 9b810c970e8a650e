//! Seed derivation.
//!
//! Every run in an experiment gets its own seed, derived from one master
//! seed and a path of counters (for example `[cell, seed_slot]`). Each step
//! mixes the next counter into the state with SplitMix64:
//!
//! ```text
//! state_0 = master
//! state_k = splitmix64(state_{k-1} ^ splitmix64(counter_k + 1))
//! ```
//!
//! Inside a run, the learner and the environment draw from two ChaCha8
//! streams (0 and 1) of that seed, so changing the environment's
//! consumption never perturbs the learner's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const POLICY_STREAM: u64 = 0;
pub const ENV_STREAM: u64 = 1;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |state, &counter| {
        splitmix64(state ^ splitmix64(counter.wrapping_add(1)))
    })
}

/// Seeds for `count` repetitions under one master seed.
pub fn seed_list(master: u64, count: usize) -> Vec<u64> {
    (0..count as u64)
        .map(|i| derive_seed(master, &[i]))
        .collect()
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
