//! Deterministic, splittable random streams.
//!
//! Every random draw in the library comes from a [`RngStream`] addressed by a
//! path of integer labels, e.g. `(generation, EVAL, offspring, sample)`. The
//! draws for a given path never depend on how many threads evaluate a batch
//! or in which order the work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator handed to tasks and operators.
pub type StreamRng = ChaCha8Rng;

/// Labels separating the purposes a stream can be derived for.
pub mod label {
    pub const CVT: u64 = 0x4356_5400;
    pub const SELECT: u64 = 0x5345_4c00;
    pub const EVAL: u64 = 0x4556_4100;
    pub const REEVAL: u64 = 0x5245_4500;
    pub const ADD: u64 = 0x4144_4400;
    pub const METRICS: u64 = 0x4d45_5400;
    pub const STUDY: u64 = 0x5354_5500;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    stream: u64,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Derive the sub-stream addressed by `label`.
    pub fn child(&self, label: u64) -> Self {
        let stream = splitmix64(self.stream ^ splitmix64(label.wrapping_add(0x632b_e59b_d9b4_e019)));
        Self {
            seed: self.seed,
            stream,
        }
    }

    /// Derive along a path of labels: `s.path(&[a, b])` equals `s.child(a).child(b)`.
    pub fn path(&self, labels: &[u64]) -> Self {
        labels.iter().fold(*self, |s, &l| s.child(l))
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}
