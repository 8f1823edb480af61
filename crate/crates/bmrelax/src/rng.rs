//! Named, collision-free RNG streams.
//!
//! Every stochastic component draws from a ChaCha8 stream addressed by
//! (master seed, purpose, index). Purposes are fixed constants; the index is
//! a loop counter (update number, instance number, ...). This makes every
//! result a pure function of the master seed and the config — resuming from a
//! checkpoint re-derives the exact stream for update t instead of carrying
//! serialized RNG state around.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes. Values are stable identifiers — changing them changes
/// every seeded result, so treat them like a file-format constant.
pub mod purpose {
    pub const INIT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const POSTERIOR_NOISE: u64 = 3;
    pub const NEG_PHASE: u64 = 4;
    pub const AIS: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const BINARIZE: u64 = 7;
    pub const SYNTHETIC: u64 = 8;
    pub const DIAG: u64 = 9;
}

/// A ChaCha8 generator on stream `(purpose << 40) | index`.
///
/// Purposes are small constants and indices are loop counters, so distinct
/// (purpose, index) pairs map to distinct ChaCha streams of the same seed.
pub fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    debug_assert!(index < 1 << 40, "rng stream index overflow");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 40) | index);
    rng
}
