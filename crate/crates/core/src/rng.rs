//! The project-wide seeded generator.
//!
//! Every random draw in the library and CLI comes from ChaCha8 (the ChaCha
//! stream cipher reduced to 8 double-rounds) as implemented by
//! `rand_chacha::ChaCha8Rng`:
//!
//! * key: the 64-bit seed as 8 little-endian bytes followed by 24 zero bytes;
//! * nonce/stream: 0 for [`seeded`], `id` for [`stream`];
//! * block counter starts at 0; each 64-byte block yields sixteen 32-bit
//!   words in order, and a `u64` is two consecutive words, low word first;
//! * a uniform `f64` in `[0, 1)` is `(u64 >> 11) * 2^-53`.
//!
//! Per-sample streams (rain synthesis, dataset images) use
//! `stream(seed, sample_index)` so samples are independent of generation
//! order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub fn stream(seed: u64, id: u64) -> Rng {
    let mut r = seeded(seed);
    r.set_stream(id);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, RngCore};

    #[test]
    fn matches_reference_block_function() {
        // First words of an independent ChaCha8 block function.
        let mut r = seeded(0);
        assert_eq!(r.next_u32(), 0x2fef_003e);
        assert_eq!(r.next_u32(), 0xd640_5f89);
        let mut r = stream(7, 5);
        assert_eq!(r.next_u32(), 0x82a3_2743);
        assert_eq!(r.next_u32(), 0x0717_9ba3);
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let draw = |mut r: Rng| (0..4).map(|_| r.random::<u64>()).collect::<Vec<_>>();
        assert_eq!(draw(stream(7, 1)), draw(stream(7, 1)));
        assert_ne!(draw(stream(7, 1)), draw(stream(7, 2)));
        assert_ne!(draw(seeded(7)), draw(seeded(8)));
    }

    #[test]
    fn unit_float_uses_top_53_bits() {
        let mut r = seeded(3);
        let mut c = r.clone();
        let f: f64 = r.random();
        assert_eq!(f, (c.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64));
    }
}
