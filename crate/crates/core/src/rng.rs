//! Seed derivation for every random stream in the crate.
//!
//! All randomness descends from one global seed. Each consumer names its
//! stream and a key path (round, client, layer, ...), and receives an
//! independent ChaCha8 generator. Toggling one stage never shifts another
//! stage's draws, and parallel clients never share a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-streams of the global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Split = 2,
    Partition = 3,
    Init = 4,
    Batch = 5,
    Dither = 6,
    Flip = 7,
    Laplace = 8,
    Probe = 9,
    MonteCarlo = 10,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds `(global, stream, path...)` into a single 64-bit seed.
pub fn derive_seed(global: u64, stream: Stream, path: &[u64]) -> u64 {
    let mut h = splitmix64(global ^ 0x6364_7061_0000_0000);
    h = splitmix64(h ^ stream as u64);
    for &k in path {
        h = splitmix64(h ^ splitmix64(k));
    }
    h
}

/// Generator for the given stream and key path.
pub fn keyed_rng(global: u64, stream: Stream, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(global, stream, path))
}
