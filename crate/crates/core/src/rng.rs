//! Seeded random substreams.
//!
//! Every stochastic operation draws from a ChaCha20 stream. The 256-bit key is
//! derived from the user seed with `SeedableRng::seed_from_u64` (PCG32
//! expansion) and the 64-bit stream id is `image_index << 8 | purpose tag`, so
//! the parameters of image 7 never share random numbers with its noise, and
//! neither depends on how many other images were processed before it.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// What a substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Params,
    Noise,
    Mask,
    /// Free tag for callers (tests, fixtures).
    Other(u8),
}

impl Purpose {
    pub fn tag(self) -> u8 {
        match self {
            Purpose::Params => 1,
            Purpose::Noise => 2,
            Purpose::Mask => 3,
            Purpose::Other(t) => t,
        }
    }
}

/// A user seed plus the labels selecting one substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub seed: u64,
    pub image_index: u64,
    pub purpose: Purpose,
}

impl Seed {
    pub fn new(seed: u64, image_index: u64, purpose: Purpose) -> Self {
        Self {
            seed,
            image_index,
            purpose,
        }
    }

    pub fn with_purpose(self, purpose: Purpose) -> Self {
        Self { purpose, ..self }
    }

    pub fn stream_id(&self) -> u64 {
        (self.image_index << 8) | u64::from(self.purpose.tag())
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id());
        rng
    }
}
