//! Seeded random streams. Every stochastic routine derives its generator
//! from a user seed plus stream indices, so results do not depend on how
//! work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for stream `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mixed = path
        .iter()
        .fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)));
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Stable 64-bit hash of a string (FNV-1a), for keying streams by identifiers.
pub fn key(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, &[1, 2]).random();
        let b: u64 = stream(7, &[1, 2]).random();
        let c: u64 = stream(7, &[2, 1]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(key("s1"), key("s2"));
    }
}
