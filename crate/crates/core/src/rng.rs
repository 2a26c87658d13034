//! Seeded random streams.
//!
//! Every random draw in the crate goes through a ChaCha8 stream derived from
//! an integer seed plus a stream tag, so that independent consumers (split,
//! init, dropout, batch shuffling) never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream for `seed` under `tag`.
pub fn stream(seed: u64, tag: &str) -> Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    // FNV-1a over the tag fills the second word.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    key[8..16].copy_from_slice(&h.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
