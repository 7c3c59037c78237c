//! Deterministic stream splitting from a single master seed.
//!
//! Every source of randomness in the crate is a ChaCha12 stream addressed by
//! `(master_seed, stream name)`. The stream key is derived as
//!
//! ```text
//! h0 = fnv1a64(name)
//! k[i] = splitmix64(master_seed ^ h0 ^ (i + 1) * GOLDEN)   for i = 0..3
//! ```
//!
//! where `GOLDEN` is the 64-bit golden-ratio constant. Two streams with
//! different names, or the same name under different master seeds, are
//! statistically independent. The scheme is pure integer arithmetic, so it is
//! identical on every platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// A ChaCha12 generator for the named stream under `master_seed`.
pub fn stream_rng(master_seed: u64, stream: &str) -> ChaCha12Rng {
    let h0 = fnv1a64(stream.as_bytes());
    let mut seed = [0u8; 32];
    for i in 0..4 {
        let word = splitmix64(master_seed ^ h0 ^ (i as u64 + 1).wrapping_mul(GOLDEN));
        seed[i * 8..(i + 1) * 8].copy_from_slice(&word.to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}

/// Convenience for indexed sub-streams, e.g. one stream per trial.
pub fn indexed_stream_rng(master_seed: u64, stream: &str, index: u64) -> ChaCha12Rng {
    stream_rng(master_seed ^ splitmix64(index), stream)
}

/// First word of the named stream, for deriving child seeds.
pub fn derive_seed(master_seed: u64, stream: &str) -> u64 {
    rand::Rng::random(&mut stream_rng(master_seed, stream))
}

/// First word of the indexed stream, for deriving per-index child seeds.
pub fn derive_indexed_seed(master_seed: u64, stream: &str, index: u64) -> u64 {
    rand::Rng::random(&mut indexed_stream_rng(master_seed, stream, index))
}
