//! Named RNG substreams fanned out from one master seed.
//!
//! Every consumer draws from its own ChaCha stream keyed by
//! `(master, name, index)`, so adding draws in one consumer never shifts
//! the values another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TOPOLOGY: &str = "topology";
pub const ARRIVALS: &str = "arrivals";
pub const CHANNEL: &str = "channel";
pub const NET_INIT: &str = "net-init";
pub const SAMPLING: &str = "sampling";
pub const BUFFER: &str = "buffer";
pub const SHUFFLE: &str = "shuffle";

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedStreams {
    master: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        SeedStreams { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, name: &str) -> ChaCha8Rng {
        self.indexed(name, 0)
    }

    pub fn indexed(&self, name: &str, index: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut state = splitmix(self.master) ^ fnv1a(name);
        for chunk in seed.chunks_mut(8) {
            state = splitmix(state ^ index);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}
