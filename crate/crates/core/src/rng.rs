//! Seeded, stage-split random streams.
//!
//! One 64-bit run seed feeds a ChaCha20 generator per stage; the stream id is
//! the FNV-1a hash of the stage name, so a stage's draws do not depend on
//! which other stages ran before it.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn stream(self, stage: &str) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.0);
        rng.set_stream(fnv1a(stage.as_bytes()));
        rng
    }

    /// Derive a child seed, e.g. one per tree or per frame.
    pub fn derive(self, label: &str, index: u64) -> RngSeed {
        let mut h = fnv1a(label.as_bytes()) ^ self.0.rotate_left(17);
        h ^= index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        RngSeed(splitmix(h))
    }
}

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
