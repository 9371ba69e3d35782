//! Named random substreams derived from one master seed.
//!
//! Each consumer draws from its own ChaCha stream, so switching a scenario on
//! or off never shifts the draws seen by the normal agents.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    AgentInit,
    Learning,
    ExpectationNoise,
    OrderPrice,
    Scenario,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::AgentInit => 1,
            Stream::Learning => 2,
            Stream::ExpectationNoise => 3,
            Stream::OrderPrice => 4,
            Stream::Scenario => 5,
        }
    }
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
