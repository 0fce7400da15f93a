//! Keyed random streams.
//!
//! Every random draw in an experiment comes from a stream addressed by a key
//! path such as `(seed, "sumxex", "bqmc", trial, level, "shift")`. Streams for
//! different keys are independent, so adding, removing or reordering trials
//! (or running them on different threads) never changes another trial's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The generator behind every stream.
pub type StreamRng = ChaCha12Rng;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    state: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        Self {
            state: splitmix64(seed),
        }
    }

    /// Child key for an integer component (trial, level, replicate, ...).
    pub fn index(&self, i: u64) -> Self {
        Self {
            state: splitmix64(self.state ^ splitmix64(i.wrapping_add(0x5851_f42d_4c95_7f2d))),
        }
    }

    /// Child key for a named component (problem, method, purpose, ...).
    pub fn name(&self, s: &str) -> Self {
        Self {
            state: splitmix64(self.state.rotate_left(17) ^ fnv1a(s)),
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut seed = [0u8; 32];
        let mut z = self.state;
        for chunk in seed.chunks_exact_mut(8) {
            z = splitmix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        StreamRng::from_seed(seed)
    }
}
