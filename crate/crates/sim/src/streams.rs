//! Named random substreams keyed by seed and trial index.
//!
//! Every trial draws from its own ChaCha stream per purpose, so results do not
//! depend on execution order or worker count, and all receivers see the same
//! channel, bits and noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Channel = 0,
    Noise = 1,
    Bits = 2,
    Interleaver = 3,
    Init = 4,
    Bootstrap = 5,
}

const STREAMS_PER_TRIAL: u64 = 8;

pub fn substream(seed: u64, trial: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial * STREAMS_PER_TRIAL + which as u64);
    rng
}
