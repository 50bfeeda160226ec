//! Seeded, named random streams.
//!
//! Every randomized step draws from its own stream derived from a 64-bit
//! seed and a stream name, so adding draws to one phase never perturbs
//! another. Streams are ChaCha8 keyed by the seed with the stream word set
//! from an FNV-1a hash of the name, which is stable across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A 64-bit experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    pub fn stream(self, name: &str) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(fnv1a(name.as_bytes()));
        rng
    }

    /// Derive a child seed, e.g. one per AL cycle.
    pub fn child(self, name: &str, index: u64) -> Seed {
        let mut h = fnv1a(name.as_bytes()) ^ self.0.rotate_left(17);
        h ^= index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Seed(splitmix64(h))
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
