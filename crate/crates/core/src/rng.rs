//! Seeded random streams for reproducible trials.
//!
//! All randomness in this crate flows through [`TrialRng`], a ChaCha8 stream
//! cipher in counter mode (`rand_chacha::ChaCha8Rng`). The generator is fully
//! specified by its seed, independent of platform word size or endianness, so
//! traces and reports are bit-reproducible everywhere. Trial `k` of an
//! experiment with base seed `s` draws from the stream seeded with
//! `s.wrapping_add(k)`, which keeps concurrent trials independent of
//! scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used for every stochastic component in this crate.
pub type TrialRng = ChaCha8Rng;

/// Stream for a single seed (estimators, one-off draws).
pub fn seeded(seed: u64) -> TrialRng {
    TrialRng::seed_from_u64(seed)
}

/// Stream for trial `trial` of an experiment with base seed `base_seed`.
pub fn trial_stream(base_seed: u64, trial: u64) -> TrialRng {
    TrialRng::seed_from_u64(base_seed.wrapping_add(trial))
}
