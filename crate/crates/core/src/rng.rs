//! Seedable 64-bit xorshift generator with a fully specified state transition,
//! so sample streams can be reproduced bit-for-bit in any language.
//!
//! Seeding: the 64-bit seed is passed once through the SplitMix64 finalizer
//!
//! ```text
//! z = seed + 0x9E3779B97F4A7C15
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! state = z ^ (z >> 31)          (replaced by 0x9E3779B97F4A7C15 if zero)
//! ```
//!
//! Step (xorshift64*): `x ^= x >> 12; x ^= x << 25; x ^= x >> 27;`
//! output `x * 0x2545F4914F6CDD1D`. All arithmetic wraps modulo 2⁶⁴.
//!
//! A uniform double in `[0, 1)` is `(output >> 11) * 2⁻⁵³`.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn seed_from_u64(seed: u64) -> Self {
        let mut z = seed.wrapping_add(GOLDEN);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        Self {
            state: if z == 0 { GOLDEN } else { z },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_pinned() {
        // first outputs for seed 0, frozen so ports can check their transition
        let mut r = XorShift64Star::seed_from_u64(0);
        let first: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        let mut again = XorShift64Star::seed_from_u64(0);
        assert_eq!(first, (0..3).map(|_| again.next_u64()).collect::<Vec<_>>());
        assert_eq!(first, FROZEN_SEED0);
    }

    const FROZEN_SEED0: [u64; 3] = [
        0x7bbc_b40d_5506_82d0,
        0xde7f_e413_d00c_c9fd,
        0xb3c6_3835_3c66_8c91,
    ];

    #[test]
    fn uniform_range_and_mean() {
        let mut r = XorShift64Star::seed_from_u64(7);
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = r.next_f64();
            assert!((0.0..1.0).contains(&x));
            sum += x;
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn distinct_seeds_diverge() {
        let mut a = XorShift64Star::seed_from_u64(1);
        let mut b = XorShift64Star::seed_from_u64(2);
        assert_ne!(a.next_u64(), b.next_u64());
    }
}
