//! Deterministic seed derivation.
//!
//! Every source of randomness in the crate is a ChaCha stream whose seed is
//! derived from a user seed plus a textual tag and an index. Independent
//! components (per-day generation, rollout workers, minibatch shuffles) get
//! independent streams, which keeps outputs reproducible regardless of how
//! work is scheduled.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 step; a small, well-known 64-bit mixer.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a 64-bit sub-seed from `(seed, tag, index)`.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut state = seed ^ 0x6a09_e667_f3bc_c908;
    for &b in tag.as_bytes() {
        state ^= u64::from(b);
        splitmix64(&mut state);
    }
    state ^= index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    splitmix64(&mut state)
}

/// A ChaCha RNG for the stream identified by `(seed, tag, index)`.
pub fn stream(seed: u64, tag: &str, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(seed, tag, index))
}
