//! Seed derivation for reproducible random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit value derived from
//! `(global seed, agent id, iteration)` with a SplitMix64 chain. The mixing
//! function is fixed here and must not change between releases: recorded
//! runs depend on it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator type used for all simulation and sampling randomness.
pub type SimRng = ChaCha8Rng;

/// Domain tags for streams that are not tied to a training iteration.
/// They occupy the top of the `u64` range so they never collide with real
/// iteration indices.
pub mod tag {
    pub const CRITIC_INIT: u64 = u64::MAX;
    pub const POLICY_INIT: u64 = u64::MAX - 1;
    pub const EVAL: u64 = u64::MAX - 2;
    pub const RESET: u64 = u64::MAX - 3;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a global seed, an agent id and an iteration (or a [`tag`]) into
/// one 64-bit stream key.
pub fn stream_key(global: u64, agent: u64, iteration: u64) -> u64 {
    let a = splitmix64(global);
    let b = splitmix64(a ^ agent);
    splitmix64(b ^ iteration.rotate_left(17))
}

/// Random stream for `agent` at `iteration`.
pub fn stream(global: u64, agent: u64, iteration: u64) -> SimRng {
    SimRng::seed_from_u64(stream_key(global, agent, iteration))
}
