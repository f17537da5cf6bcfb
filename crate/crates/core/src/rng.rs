//! Deterministic random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha8 generator (RFC 7539
//! block function, 8 rounds). A stream is identified by a master seed plus a
//! `(purpose, epoch, client)` triple:
//!
//! * the 256-bit ChaCha key is `ChaCha8Rng::seed_from_u64(master)` (the
//!   `rand_core` PCG32 key expansion);
//! * the 64-bit ChaCha stream id is
//!   `mix(mix(mix(purpose) ^ epoch) ^ client)` where `mix` is the SplitMix64
//!   finalizer and `purpose` is the discriminant of [`Purpose`].
//!
//! Streams for distinct triples never share keystream blocks, so the order in
//! which clients or epochs are processed cannot change any draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The concrete generator behind every stream.
pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Discriminants are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    ModelInit = 1,
    Partition = 2,
    ClientSelection = 3,
    Poisoning = 4,
    LocalTraining = 5,
    MonteCarlo = 6,
    Clustering = 7,
    Synthetic = 8,
    Plugin = 9,
    Holdout = 10,
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for a `(purpose, epoch, client)` triple.
pub fn stream_id(purpose: Purpose, epoch: u64, client: u64) -> u64 {
    mix(mix(mix(purpose as u64) ^ epoch) ^ client)
}

/// Opens the stream for `(master, purpose, epoch, client)`.
pub fn stream(master: u64, purpose: Purpose, epoch: u64, client: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream_id(purpose, epoch, client));
    rng
}

/// Derives a child master seed, used when a sub-operation takes a plain `u64` seed.
pub fn derive_seed(master: u64, purpose: Purpose, epoch: u64, client: u64) -> u64 {
    use rand::RngCore;
    stream(master, purpose, epoch, client).next_u64()
}
