//! Seed-derived random streams.
//!
//! One root seed per episode. Every consumer gets its own ChaCha8 stream,
//! selected by purpose and an index (arm, group, ...), so randomness drawn for
//! one purpose never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Transitions = 1,
    Policy = 2,
    Upsample = 3,
    Instance = 4,
}

/// Human-readable summary of the stream layout, echoed into run manifests.
pub const RNG_SCHEME: &str = "ChaCha8Rng::seed_from_u64(seed), stream = purpose << 48 | index; \
     purposes: transitions=1 (index=arm), policy=2, upsample=3 (index=allocation call), instance=4";

/// Independent stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | index);
    rng
}
