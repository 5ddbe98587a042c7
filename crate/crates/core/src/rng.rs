//! Seed fan-out: one master seed feeds independent ChaCha streams so a
//! single component's randomness can change without disturbing the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    EnvInit = 1,
    WeightInit = 2,
    LatentInit = 3,
    Noise = 4,
    ActionSampling = 5,
    BatchSampling = 6,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedStreams {
    pub master: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(stream as u64);
        rng
    }

    /// Seeds for a sub-run (a trial or a sweep cell), derived with splitmix64.
    pub fn child(&self, index: u64) -> SeedStreams {
        SeedStreams::new(splitmix64(self.master ^ splitmix64(index.wrapping_add(0x9e37_79b9))))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
