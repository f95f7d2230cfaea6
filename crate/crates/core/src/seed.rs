//! Seed streams for replicate-parallel simulation.
//!
//! A replicate's generator is a [`ChaCha8Rng`] seeded with
//! `derive_seed(master, replicate)` through `SeedableRng::seed_from_u64`,
//! and its ChaCha stream number selects independent sub-streams within the
//! replicate (see [`Stream`]).
//!
//! `derive_seed` is the SplitMix64 step:
//!
//! ```text
//! z = master + (replicate + 1) * 0x9E3779B97F4A7C15      (mod 2^64)
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z =  z ^ (z >> 31)
//! ```
//!
//! The offset map is a bijection in `replicate` (odd multiplier) and in
//! `master`, and the finalizer is a bijection of `u64`, so distinct
//! replicates (or distinct masters) never share a seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn derive_seed(master: u64, replicate: u64) -> u64 {
    let mut z = master.wrapping_add(replicate.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-streams used within one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Population paths (`Z`, `Y`, coupled pairs).
    Paths = 0,
    /// Stand-alone martingale-limit samples.
    MartingaleLimit = 1,
}

/// Generator seeded directly from a 64-bit seed on the path stream.
pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn replicate_rng(master: u64, replicate: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, replicate));
    rng.set_stream(stream as u64);
    rng
}
