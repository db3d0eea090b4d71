//! Seeded random streams.
//!
//! Every run derives its generators from one root seed. Each subsystem gets
//! its own ChaCha stream so that, for example, changing how data are generated
//! does not perturb parameter initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent consumers of randomness within one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Noise = 3,
    Shuffle = 4,
    Split = 5,
    Eval = 6,
}

/// Generator for `stream` under the root `seed`.
pub fn stream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
