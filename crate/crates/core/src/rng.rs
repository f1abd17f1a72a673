//! Seeding helpers.
//!
//! Every run owns one ChaCha8 key derived from the master seed. Stream 0 of
//! that key drives engine-level randomness (matching shuffles, churn); agent
//! slot `i` draws from stream `i + 1`. Changing the population size therefore
//! never reshuffles the draws of the agents that remain.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn engine_rng(master_seed: u64) -> SimRng {
    stream_rng(master_seed, 0)
}

pub fn agent_rng(master_seed: u64, agent: usize) -> SimRng {
    stream_rng(master_seed, agent as u64 + 1)
}

fn stream_rng(master_seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}
