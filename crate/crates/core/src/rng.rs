//! Splittable, reproducible random streams.
//!
//! A stream is named by a `(master_seed, stream_index)` pair. The pair is
//! folded into a generator seed by a stateless SplitMix64 avalanche:
//!
//! ```text
//! key  = mix(master_seed) ^ mix(stream_index + 0x9E37_79B9_7F4A_7C15)
//! seed = mix(key), mix(key + 1), mix(key + 2), mix(key + 3)   (32 bytes, little endian)
//! ```
//!
//! and the bytes seed a ChaCha8 generator, whose output is specified bit for
//! bit and therefore identical on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator behind every stream.
pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        RngStream {
            master_seed,
            stream_index,
        }
    }

    /// The derived 64-bit key of this stream.
    pub fn key(&self) -> u64 {
        mix64(self.master_seed) ^ mix64(self.stream_index.wrapping_add(GOLDEN))
    }

    /// A sub-stream. Children of distinct parents or with distinct indices
    /// are keyed apart by another avalanche round.
    pub fn child(&self, index: u64) -> RngStream {
        RngStream {
            master_seed: self.key(),
            stream_index: index,
        }
    }

    /// A fresh generator positioned at the start of the stream.
    pub fn rng(&self) -> SimRng {
        let key = self.key();
        let mut seed = [0u8; 32];
        for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
            chunk.copy_from_slice(&mix64(key.wrapping_add(i as u64)).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}
