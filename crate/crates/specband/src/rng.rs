//! Deterministic random number generation.
//!
//! Every random decision in the toolkit flows through the xoshiro256++
//! generator seeded via SplitMix64, so streams can be reproduced bit-for-bit
//! by any implementation of those published algorithms. No platform or
//! library RNG is ever consulted.

/// Tag mixed into derived seeds when both channel groups share randomness.
pub const GROUP_TAG_SHARED: u64 = 0;
/// Tag for the RGB group under the independent randomness policy.
pub const GROUP_TAG_RGB: u64 = 1;
/// Tag for the NIR group under the independent randomness policy.
pub const GROUP_TAG_NIR: u64 = 2;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 stream generator (Steele, Lea, Flood 2014).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// One-shot SplitMix64 step: the first output of a stream seeded with `z`.
pub fn mix64(z: u64) -> u64 {
    SplitMix64::new(z).next_u64()
}

/// Fold `parts` into `base` with SplitMix64 mixing.
///
/// Used to derive per-item and per-group seeds from a run seed: the same
/// (base, parts) always yields the same derived seed, and distinct parts
/// yield uncorrelated streams.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut s = mix64(base);
    for &p in parts {
        s = mix64(s ^ mix64(p));
    }
    s
}

/// FNV-1a 64-bit hash, used to reduce item identifiers to seed material.
pub fn fnv1a64(data: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in data {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// xoshiro256++ (Blackman, Vigna 2019), seeded from a u64 via SplitMix64.
#[derive(Debug, Clone)]
pub struct Xoshiro256pp {
    s: [u64; 4],
}

impl Xoshiro256pp {
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        Self {
            s: [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()],
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform f64 in [0, 1) using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n) via unbiased rejection sampling.
    ///
    /// Accepts v >= 2^64 mod n and returns v % n; this exact procedure is
    /// mirrored by the golden-value oracle, so do not change it.
    pub fn bounded(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let t = n.wrapping_neg() % n;
        loop {
            let v = self.next_u64();
            if v >= t {
                return v % n;
            }
        }
    }

    /// In-place Fisher-Yates shuffle, iterating from the last index down.
    pub fn shuffle<T>(&mut self, a: &mut [T]) {
        for i in (1..a.len()).rev() {
            let j = self.bounded(i as u64 + 1) as usize;
            a.swap(i, j);
        }
    }

    /// Standard normal deviate via Box-Muller (polar form is avoided so the
    /// number of uniforms consumed per call is fixed).
    pub fn next_gaussian(&mut self) -> f64 {
        // u in (0, 1] so ln(u) is finite
        let u = 1.0 - self.next_f64();
        let v = self.next_f64();
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    }

    /// Poisson deviate by Knuth's multiplication method. Adequate for the
    /// photon-count scales used here (lambda <= ~700).
    pub fn next_poisson(&mut self, lambda: f64) -> u64 {
        if lambda <= 0.0 {
            return 0;
        }
        let l = (-lambda).exp();
        let mut k = 0u64;
        let mut p = 1.0;
        loop {
            k += 1;
            p *= self.next_f64();
            if p <= l {
                return k - 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Golden values produced by an independent Python implementation of the
    // published SplitMix64 / xoshiro256++ reference algorithms.

    #[test]
    fn splitmix_stream_matches_reference() {
        let mut sm = SplitMix64::new(7);
        assert_eq!(sm.next_u64(), 0x63CB_E1E4_5932_0DD7);
        assert_eq!(sm.next_u64(), 0x044C_3CD7_F43C_661C);
        assert_eq!(sm.next_u64(), 0xE698_4080_BAB1_2A02);
        assert_eq!(sm.next_u64(), 0x953A_EB70_673E_29CB);
    }

    #[test]
    fn xoshiro_stream_matches_reference() {
        let mut rng = Xoshiro256pp::from_seed(7);
        assert_eq!(rng.next_u64(), 0x0E2C_1A00_2AAE_913D);
        assert_eq!(rng.next_u64(), 0x2C0F_C8DD_FA4E_9E14);
        assert_eq!(rng.next_u64(), 0xB7B3_11B3_B0D4_5872);
        assert_eq!(rng.next_u64(), 0x6D5D_9F6A_6318_013C);
    }

    #[test]
    fn derive_seed_matches_reference() {
        assert_eq!(derive_seed(7, &[GROUP_TAG_NIR]), 0x1ADD_F095_629F_E974);
        assert_eq!(derive_seed(7, &[GROUP_TAG_RGB]), 0x34CA_C548_9FDC_078A);
    }

    #[test]
    fn fnv_matches_reference() {
        assert_eq!(fnv1a64(b""), 0xCBF2_9CE4_8422_2325);
        assert_eq!(fnv1a64(b"item-000"), 0x52D4_7F83_9735_11AB);
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = Xoshiro256pp::from_seed(99);
        let mut b = Xoshiro256pp::from_seed(99);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn bounded_stays_in_range() {
        let mut rng = Xoshiro256pp::from_seed(3);
        for n in 1..50u64 {
            for _ in 0..20 {
                assert!(rng.bounded(n) < n);
            }
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = Xoshiro256pp::from_seed(11);
        let mut v: Vec<usize> = (0..17).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..17).collect::<Vec<_>>());
    }

    #[test]
    fn gaussian_moments_are_plausible() {
        let mut rng = Xoshiro256pp::from_seed(5);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn poisson_mean_tracks_lambda() {
        let mut rng = Xoshiro256pp::from_seed(9);
        for lambda in [0.5, 3.0, 25.0, 60.0] {
            let n = 20_000;
            let total: u64 = (0..n).map(|_| rng.next_poisson(lambda)).sum();
            let mean = total as f64 / n as f64;
            assert!(
                (mean - lambda).abs() < lambda.max(1.0) * 0.05,
                "lambda {lambda} mean {mean}"
            );
        }
    }
}
