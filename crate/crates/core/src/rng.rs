//! Seed derivation and independent random streams.
//!
//! Every replication owns its generators outright. The delay channel and the
//! bootstrap resampler draw from different ChaCha streams of the same seed, so
//! detection randomness never shifts the simulated delay sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    Delay,
    Bootstrap,
}

impl RngStream {
    fn id(self) -> u64 {
        match self {
            RngStream::Delay => 0,
            RngStream::Bootstrap => 1,
        }
    }
}

pub fn stream_rng(seed: u64, stream: RngStream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// SplitMix64 finalizer applied to `base + index`, giving well-separated
/// per-replication seeds from a single base seed.
pub fn replication_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
