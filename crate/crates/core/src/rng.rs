//! Named random sub-streams derived from a single scenario seed.
//!
//! Every consumer of randomness draws from its own ChaCha stream so that changing
//! how many numbers one component draws never perturbs another component.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Population,
    Posting,
    Text,
    Replies,
    Training,
    Split,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Population => 1,
            Stream::Posting => 2,
            Stream::Text => 3,
            Stream::Replies => 4,
            Stream::Training => 5,
            Stream::Split => 6,
        }
    }
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
