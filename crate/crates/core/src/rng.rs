//! Seeded, splittable random streams.
//!
//! ChaCha is counter based, so a `(seed, stream)` pair addresses an
//! independent sequence without any shared state. Runs use one stream per
//! optimizer step; draws within a step are consumed in order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids below this are reserved for per-step batch sampling.
pub const AUXILIARY_STREAM_BASE: u64 = 1 << 62;
