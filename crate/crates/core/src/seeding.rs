//! Deterministic per-component random streams.
//!
//! Every stochastic component of a run draws from its own ChaCha stream,
//! keyed by the run seed, a user salt and the component, so adding draws in
//! one component never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Oracle = 1,
    Guard = 2,
    Agent = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_rng(run_seed: u64, salt: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(run_seed) ^ splitmix64(salt.wrapping_add(0x5EED)));
    rng.set_stream(stream as u64);
    rng
}
