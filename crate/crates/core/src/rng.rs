//! Seeded random streams.
//!
//! A [`SeedPolicy`] names one ChaCha8 keystream: the key is expanded from
//! `master_seed` and the 64-bit stream counter is `stream_id`. Distinct
//! stream ids therefore give independent, non-overlapping sequences, and a
//! replicate can be assigned its stream without knowing how many replicates
//! run before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPolicy {
    pub master_seed: u64,
    #[serde(default)]
    pub stream_id: u64,
}

impl SeedPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            stream_id: 0,
        }
    }

    /// Same master seed, stream `k`.
    pub fn with_stream(self, k: u64) -> Self {
        Self {
            stream_id: k,
            ..self
        }
    }

    /// Stream for a nested task, e.g. replicate `r` of candidate `v`.
    ///
    /// The child id is a hash of the parent id and `tag`, so children of
    /// different parents do not collide in practice.
    pub fn child(self, tag: u64) -> Self {
        Self {
            stream_id: mix(self.stream_id ^ mix(tag.wrapping_add(0x632b_e59b_d9b4_e019))),
            ..self
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Replaces the stream id of `policy` with `k`.
pub fn derive_stream(policy: SeedPolicy, k: u64) -> SeedPolicy {
    policy.with_stream(k)
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
