//! Deterministic random number generation with named streams.
//!
//! Every stochastic component in the crate draws from a `ChaCha8Rng`
//! derived from a single master seed and a stream id, so that per-context
//! state (particle filters, Exp3 arms) evolves independently of the order
//! in which other contexts are touched, and whole runs replay bit-exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Stream namespace for per-context particle filters.
pub const STREAM_FILTER_BASE: u64 = 1 << 32;
/// Stream namespace for per-context Exp3 arm samplers.
pub const STREAM_EXP3_BASE: u64 = 2 << 32;
/// Stream used to shuffle a dataset into a stationary replay order.
pub const STREAM_SHUFFLE: u64 = 3 << 32;
/// Stream used by the synthetic environment generator.
pub const STREAM_SYNTHETIC: u64 = 4 << 32;

/// Build a generator on an independent stream of the master seed.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Encode the complete generator state (seed, stream, position) as hex.
///
/// The encoding is 56 bytes: 32-byte seed, little-endian u64 stream,
/// little-endian u128 word position.
pub fn rng_state_hex(rng: &ChaCha8Rng) -> String {
    let mut bytes = Vec::with_capacity(56);
    bytes.extend_from_slice(&rng.get_seed());
    bytes.extend_from_slice(&rng.get_stream().to_le_bytes());
    bytes.extend_from_slice(&rng.get_word_pos().to_le_bytes());
    hex::encode(bytes)
}

/// Rebuild a generator from [`rng_state_hex`] output, bit-identical.
pub fn rng_state_from_hex(encoded: &str) -> Result<ChaCha8Rng> {
    let bytes = hex::decode(encoded)
        .map_err(|e| Error::CorruptSnapshot(format!("bad rng hex: {e}")))?;
    if bytes.len() != 56 {
        return Err(Error::CorruptSnapshot(format!(
            "rng state must be 56 bytes, got {}",
            bytes.len()
        )));
    }
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&bytes[..32]);
    let stream = u64::from_le_bytes(bytes[32..40].try_into().unwrap());
    let word_pos = u128::from_le_bytes(bytes[40..56].try_into().unwrap());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    Ok(rng)
}

/// FNV-1a 64-bit hash; stable across platforms and compiler versions.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// SplitMix64 finalizer, used to mix seeds into hashes.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
