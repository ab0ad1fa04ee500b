//! Counter-based random substreams.
//!
//! Every path draws from its own ChaCha8 stream: the key is expanded from the
//! 64-bit run seed and the stream id is the path index. A path's draws are
//! therefore fixed by `(seed, index)` alone, regardless of how many paths are
//! simulated or which thread simulates them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Human-readable description recorded in every `PathSet`.
pub const STREAM_POLICY: &str = "chacha8(rand_chacha 0.9); key = seed_from_u64(seed); stream = path index";

#[derive(Debug, Clone)]
pub struct Substreams {
    base: ChaCha8Rng,
    seed: u64,
}

impl Substreams {
    pub fn new(seed: u64) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for path `index`, positioned at the start of its stream.
    ///
    /// `base` has not produced output, so its buffer is empty and switching
    /// the stream leaves it at word 0 without an eager refill.
    #[inline]
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(index);
        rng
    }
}
