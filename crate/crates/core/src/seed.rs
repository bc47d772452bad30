//! Named sub-seeds.
//!
//! Every random stream in a run is derived from one user seed and a tag, so a
//! single integer reproduces the whole run and streams never overlap by
//! accident.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for the stream called `tag`.
pub fn sub_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then mixed with the parent seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(splitmix64(seed) ^ h)
}

/// Sub-seed indexed by a tag and an integer coordinate (e.g. a study cell).
pub fn sub_seed_indexed(seed: u64, tag: &str, index: u64) -> u64 {
    splitmix64(sub_seed(seed, tag) ^ splitmix64(index))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_separate_streams() {
        assert_ne!(sub_seed(1, "split"), sub_seed(1, "init"));
        assert_ne!(sub_seed(1, "split"), sub_seed(2, "split"));
        assert_eq!(sub_seed(9, "dropout"), sub_seed(9, "dropout"));
        assert_ne!(sub_seed_indexed(3, "cell", 0), sub_seed_indexed(3, "cell", 1));
    }
}
