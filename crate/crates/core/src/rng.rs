//! Seeded random streams.
//!
//! All randomness in a run is derived from one root seed. Each consumer asks
//! for a named stream (a label plus integer coordinates such as player id
//! and round); the stream is a ChaCha8 generator keyed by the root seed with
//! the stream id selected from a hash of the name. Streams are independent
//! of the order in which they are requested, which keeps protocol traces
//! replayable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Seeds {
    root: u64,
}

impl Seeds {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Generator for the stream `label[indices...]`.
    pub fn stream(&self, label: &str, indices: &[u64]) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(stream_id(label, indices));
        rng
    }

    /// A child seed tree, for handing a sub-protocol its own namespace.
    pub fn child(&self, label: &str, indices: &[u64]) -> Seeds {
        Seeds::new(splitmix(self.root ^ stream_id(label, indices)))
    }
}

fn stream_id(label: &str, indices: &[u64]) -> u64 {
    // FNV-1a over the label, then splitmix folding of the indices.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    for &i in indices {
        h = splitmix(h ^ splitmix(i.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
