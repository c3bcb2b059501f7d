//! Deterministic random streams.
//!
//! Every consumer of randomness (client sampling, mini-batches, model
//! initialization, partitioning) gets its own ChaCha stream keyed by the run
//! seed plus a tuple of tags. Streams never depend on scheduling order, so a
//! run is reproducible for any degree of parallelism.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RngStream = ChaCha8Rng;

/// Stream purposes, mixed into the key so that two consumers never share a
/// stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Sampler = 2,
    Prox = 3,
    MetaGradient = 4,
    LocalSgd = 5,
    InnerSgd = 6,
    Evaluation = 7,
    Partition = 8,
    Synthetic = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes the seed and tags into a single 64-bit key.
pub fn stream_key(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(seed: u64, purpose: Purpose, tags: &[u64]) -> RngStream {
    let mut all = Vec::with_capacity(tags.len() + 1);
    all.push(purpose as u64);
    all.extend_from_slice(tags);
    ChaCha8Rng::seed_from_u64(stream_key(seed, &all))
}

/// Stream for one client in one round.
pub fn client_stream(seed: u64, purpose: Purpose, client: usize, round: usize) -> RngStream {
    stream(seed, purpose, &[client as u64, round as u64])
}
