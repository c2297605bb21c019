//! Reproducible random substreams.
//!
//! Every stream is a ChaCha12 keystream: the key is expanded from
//! `master_seed` and the 64-bit ChaCha stream number is `stream_id`, so
//! replications indexed by `stream_id` never overlap and never need to
//! coordinate.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Generator type handed to samplers.
pub type StreamRng = ChaCha12Rng;

/// Identifies one reproducible substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub const fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Same master seed, different stream.
    pub const fn with_stream(self, stream_id: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id,
        }
    }

    /// A seed whose key is derived from this seed's `(master_seed, stream_id)`
    /// and a caller-chosen `lane`. Distinct lanes give unrelated keys, so a
    /// caller can carve several independent families out of one seed.
    pub fn derive(self, lane: u64) -> Self {
        let mixed = splitmix64(
            splitmix64(self.master_seed ^ 0x6a09_e667_f3bc_c908)
                ^ splitmix64(self.stream_id.wrapping_add(0xbb67_ae85_84ca_a73b))
                ^ lane.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        Self {
            master_seed: mixed,
            stream_id: self.stream_id,
        }
    }

    /// Fresh generator positioned at the start of this substream.
    pub fn rng(&self) -> StreamRng {
        let mut key = [0u8; 32];
        let mut state = self.master_seed;
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            chunk.copy_from_slice(&splitmix64(state).to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
