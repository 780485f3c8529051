//! Seed-to-stream derivation for block-parallel generation.
//!
//! Each block of [`BLOCK_PULSES`] pulses draws from its own ChaCha8 stream:
//! the 256-bit key is the 64-bit seed in little-endian order followed by 24
//! zero bytes, and the 64-bit stream id is the block index. ChaCha8 is
//! counter-based with a 2⁶⁴-block counter per stream, so blocks never
//! overlap, and the derivation does not depend on how blocks are scheduled.
//! This mapping is part of the output contract: changing it changes every
//! simulated stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Pulses per RNG block.
pub const BLOCK_PULSES: u64 = 1 << 20;

pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(block);
    rng
}
