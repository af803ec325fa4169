use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent, reproducible stream `stream` of generator `seed`.
pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Stream ids, kept distinct so that no two consumers share randomness.
pub(crate) const STREAM_EDGES: u64 = 1;
pub(crate) const STREAM_FEATURES: u64 = 2;
pub(crate) const STREAM_SPLIT: u64 = 3;
pub(crate) const STREAM_INIT: u64 = 4;
pub(crate) const STREAM_SAMPLER: u64 = 5;
pub(crate) const STREAM_NORM: u64 = 6;
pub(crate) const STREAM_CORPUS: u64 = 7;
