//! Deterministic seed derivation and random sampling helpers.
//!
//! Every stochastic stage of the pipeline owns an explicit RNG derived from
//! a master seed through a fixed tag chain, so independent stages never
//! share a stream and any single unit of work can be re-derived in
//! isolation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tags used when deriving per-stage seeds. Keeping them in one
/// place guarantees two stages can never collide by accident.
pub mod tags {
    pub const SCENE: u64 = 0x5343_454e;
    pub const TEST_SCENE: u64 = 0x5453_4345;
    pub const TRAJECTORY: u64 = 0x5452_414a;
    pub const MAP_NOISE: u64 = 0x4d41_504e;
    pub const DESCRIPTOR: u64 = 0x4445_5343;
    pub const WAYPOINT: u64 = 0x5741_5950;
    pub const CANDIDATE: u64 = 0x4341_4e44;
    pub const ORACLE: u64 = 0x4f52_4143;
    pub const TRAIN: u64 = 0x5452_4149;
    pub const BALANCE: u64 = 0x4241_4c41;
    pub const INIT: u64 = 0x494e_4954;
    pub const POLICY_RANDOM: u64 = 0x504f_4c52;
    pub const FORWARD_JITTER: u64 = 0x464f_5257;
}

/// One step of the splitmix64 sequence. Small, well mixed, and stable
/// across platforms, which is all seed derivation needs.
#[inline]
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold a chain of tag words into a master seed. Equal inputs give equal
/// outputs on every platform; distinct chains give unrelated streams.
pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &w in words {
        s = splitmix64(s ^ w);
    }
    s
}

/// Construct the stream RNG for a derivation chain.
pub fn derive_rng(master: u64, words: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, words))
}

/// Standard normal via Box-Muller. Written out here (rather than through a
/// distributions crate) so byte-for-byte reproducibility of generated
/// artifacts depends only on the ChaCha stream itself.
pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Rejection keeps u1 strictly positive so ln() is finite.
    let mut u1: f64 = rng.gen();
    while u1 <= f64::MIN_POSITIVE {
        u1 = rng.gen();
    }
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_deterministic_and_sensitive() {
        let a = derive_seed(42, &[tags::SCENE, 3]);
        let b = derive_seed(42, &[tags::SCENE, 3]);
        assert_eq!(a, b);
        assert_ne!(a, derive_seed(42, &[tags::SCENE, 4]));
        assert_ne!(a, derive_seed(43, &[tags::SCENE, 3]));
        assert_ne!(a, derive_seed(42, &[tags::ORACLE, 3]));
    }

    #[test]
    fn derived_rngs_reproduce_streams() {
        let mut r1 = derive_rng(7, &[tags::ORACLE, 11, 2]);
        let mut r2 = derive_rng(7, &[tags::ORACLE, 11, 2]);
        for _ in 0..32 {
            assert_eq!(r1.gen::<u64>(), r2.gen::<u64>());
        }
    }

    #[test]
    fn normal_moments_are_plausible() {
        let mut rng = derive_rng(123, &[1]);
        let n = 200_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let x = sample_normal(&mut rng);
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }
}
