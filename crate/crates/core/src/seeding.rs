//! One master seed drives every random choice in the pipeline, fanned out
//! over independent ChaCha streams so that consumers never share state:
//! drawing one more dropout mask can never shift the data shuffle.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_MODEL_INIT: u64 = 0;
pub const STREAM_SHUFFLE: u64 = 1;
pub const STREAM_DROPOUT: u64 = 2;
pub const STREAM_DATA: u64 = 3;
pub const STREAM_SPLIT: u64 = 4;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
