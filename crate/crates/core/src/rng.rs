//! Counter-based stream derivation.
//!
//! Every random draw in the crate comes from a [`Seed`] derived from the
//! master seed through a path of `(purpose, index)` steps. Deriving is a pure
//! function, so a sample's stream does not depend on which worker evaluates
//! it or in what order, and any variant can be re-run in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for every stream.
pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a, used to turn purpose labels into stream tags.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// A node in the stream derivation tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(u64);

impl Seed {
    pub fn new(master: u64) -> Self {
        Seed(splitmix64(master))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Child seed for `(purpose, index)`.
    pub fn derive(self, purpose: &str, index: u64) -> Seed {
        let tag = fnv1a(purpose.as_bytes());
        let a = splitmix64(self.0 ^ tag);
        Seed(splitmix64(a ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d))))
    }

    /// Fresh generator positioned at the start of this seed's stream.
    pub fn rng(self) -> StreamRng {
        let mut bytes = [0u8; 32];
        let mut z = self.0;
        for chunk in bytes.chunks_exact_mut(8) {
            z = splitmix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        StreamRng::from_seed(bytes)
    }
}
