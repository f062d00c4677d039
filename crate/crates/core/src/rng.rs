//! Reproducible random streams.
//!
//! Every simulated quantity is drawn from a [`RngStream`], a `(seed, stream)`
//! pair that maps onto a ChaCha8 generator: the seed keys the cipher and the
//! stream id selects the ChaCha stream. Two streams with the same pair always
//! produce the same sequence; distinct stream ids are statistically
//! independent. Child streams are derived with a SplitMix64 mix of the parent
//! stream id and a tag, so a whole experiment is addressed by a tree of tags
//! rooted at one seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Address of an independent random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub const fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Child stream addressed by `tag`. Deterministic in `(self, tag)`.
    pub fn derive(&self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(tag.wrapping_add(0x632B_E59B_D9B4_E019))),
        }
    }

    /// Child stream addressed by a path of tags.
    pub fn derive_path(&self, tags: &[u64]) -> Self {
        tags.iter().fold(*self, |s, &t| s.derive(t))
    }

    /// Materialise the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
