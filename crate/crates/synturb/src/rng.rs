//! Deterministic, schedule-independent random number streams.
//!
//! Every stochastic object in this crate draws from a ChaCha stream whose key
//! is derived from the master seed plus a fixed tag path (experiment, pair or
//! node index, role). Work scheduled across threads therefore reproduces
//! byte-identical results regardless of thread count or execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream roles. Keeping these distinct guarantees that, e.g., the mode
/// amplitudes of realization i never alias the Brownian increments of pair i.
pub mod role {
    pub const MODE_INIT: u64 = 1;
    pub const MODE_ADVANCE: u64 = 2;
    pub const PAIR_BROWNIAN: u64 = 3;
    pub const PAIR_DIRECTION: u64 = 4;
    pub const LIMIT_TRAJ: u64 = 5;
    pub const SCALAR_BROWNIAN: u64 = 6;
    pub const SCALAR_NODES: u64 = 7;
    pub const PERMUTATION: u64 = 8;
    pub const TWO_POINT: u64 = 9;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a 64-bit stream key from a master seed and a tag path.
pub fn derive_key(seed: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(seed ^ 0x6170_7369_642d_7475);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    state
}

/// Counter-based stream for (seed, tags...). Independent tag paths give
/// statistically independent streams.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_key(seed, tags))
}
