//! Keyed random streams: a stream is addressed by `(seed, tag, index)`, so
//! parallel draws do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// FNV-1a hash of a purpose tag.
fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Independent generator for `(seed, tag, index)`.
pub fn stream(seed: u64, tag: &str, index: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag_hash(tag).to_le_bytes());
    key[16..24].copy_from_slice(&0x6d61_6e69_666f_6c64u64.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
