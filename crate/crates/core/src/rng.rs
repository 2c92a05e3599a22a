//! Seeded random streams.
//!
//! Every random draw goes through ChaCha8 (`rand_chacha::ChaCha8Rng`), whose
//! output is fixed across platforms. A user seed is expanded with
//! `seed_from_u64` and each consumer reads its own ChaCha stream id, so
//! splitting, shuffling, initialisation and synthesis never share draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Stream identifiers for each consumer of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Split = 1,
    Shuffle = 2,
    Init = 3,
    Synth = 4,
    Oracle = 5,
}

pub fn stream(seed: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// Serializable snapshot of a ChaCha8 generator position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngState {
    pub key: [u8; 32],
    pub stream: u64,
    /// Word position, as a decimal string (u128 does not fit a JSON number).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            key: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Option<ChaCha8Rng> {
        let pos: u128 = self.word_pos.parse().ok()?;
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Some(rng)
    }
}
