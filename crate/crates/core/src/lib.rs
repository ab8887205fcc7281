//! Two-player mini-Pommerman, a small actor-critic network with analytic
//! gradients, asynchronous advantage actor-critic losses (with terminal
//! prediction and planner imitation), and a UCT planner used as a demonstrator.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, threads and the
//! command line live in the `bac` crate.

#![no_std]
#![allow(clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod check;
pub mod env;
pub mod mcts;
pub mod nn;
pub mod opponents;
pub mod outcome;
pub mod rl;

pub use env::{Action, GameState, Pos};
pub use nn::{NetworkOutput, NetworkParams};

/// Deterministic generator used everywhere a seed is accepted.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate-wide generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Mixes two words into a fresh seed (splitmix64 finalizer).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
