//! Keyed RNG substreams.
//!
//! Every consumer of randomness derives its own ChaCha stream from the
//! experiment seed plus a tag path, so the order in which clients run never
//! changes what any of them draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub mod tag {
    pub const DATA: u64 = 0x0d47_a000;
    pub const TEST_DATA: u64 = 0x0d47_a001;
    pub const PARTITION: u64 = 0x9a27_0000;
    pub const SPLIT: u64 = 0x5b11_7000;
    pub const MODEL_INIT: u64 = 0x1417_0000;
    pub const ETF: u64 = 0xe7f0_0000;
    pub const SAMPLING: u64 = 0x5a3b_1000;
    pub const LOCAL_TRAIN: u64 = 0x10ca_1000;
    pub const FINETUNE: u64 = 0xf1e7_0000;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a deterministic stream from `seed` and a tag path.
pub fn substream(seed: u64, tags: &[u64]) -> SimRng {
    let mut state = splitmix64(seed);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        state = splitmix64(state.wrapping_add(i as u64));
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Stream used by one client's local training in one round.
pub fn client_round_rng(seed: u64, client: usize, round: usize) -> SimRng {
    substream(seed, &[tag::LOCAL_TRAIN, client as u64, round as u64])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_keyed() {
        let a: u64 = substream(7, &[1, 2]).random();
        let b: u64 = substream(7, &[1, 2]).random();
        let c: u64 = substream(7, &[2, 1]).random();
        let d: u64 = substream(8, &[1, 2]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
