//! Private-opinion noise.
//!
//! The default sampler is the two-sided discrete Weierstrass hierarchy: a
//! level `j` is drawn with `P(j) = (1 - 1/K) K^-j` and the noise takes the
//! value `±b0 b^j` with an equiprobable sign. The magnitude tail satisfies
//! `P(|eps| >= b0 b^j) = K^-j`, a Pareto law with exponent `ln K / ln b`.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{ConstraintViolation, Error, Result};

/// Hard cap on the sampled level. Reaching it has probability `K^-64`.
pub const MAX_LEVEL: usize = 64;

const FAST_LEVELS: usize = 8;

/// Anything that can produce one additive opinion-noise value per drawing.
pub trait NoiseSource {
    fn sample<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WmNoiseParams {
    /// Level-probability base.
    pub k: f64,
    /// Magnitude base.
    pub b: f64,
    /// Smallest magnitude.
    pub b0: f64,
}

impl Default for WmNoiseParams {
    fn default() -> Self {
        Self {
            k: 5.0,
            b: 2.0,
            b0: 0.2,
        }
    }
}

impl WmNoiseParams {
    pub fn new(k: f64, b: f64, b0: f64) -> Result<Self> {
        let params = Self { k, b, b0 };
        let violations = params.violations();
        if violations.is_empty() {
            Ok(params)
        } else {
            Err(Error::Constraint(violations))
        }
    }

    pub fn violations(&self) -> Vec<ConstraintViolation> {
        let mut v = Vec::new();
        let mut check = |ok: bool, name: &str, constraint: &str, value: f64| {
            if !ok {
                v.push(ConstraintViolation {
                    parameter: name.to_string(),
                    constraint: constraint.to_string(),
                    value: value.to_string(),
                });
            }
        };
        check(self.k.is_finite() && self.k > 1.0, "noise.k", "K > 1", self.k);
        check(self.b.is_finite() && self.b > 1.0, "noise.b", "b > 1", self.b);
        check(self.b0.is_finite() && self.b0 > 0.0, "noise.b0", "b0 > 0", self.b0);
        v
    }

    /// Tail exponent of the magnitude distribution, `ln K / ln b`.
    pub fn pareto_exponent(&self) -> f64 {
        self.k.ln() / self.b.ln()
    }

    /// Closed-form `P(j)`.
    pub fn level_probability(&self, j: u32) -> f64 {
        (1.0 - 1.0 / self.k) * self.k.powi(-(j as i32))
    }

    /// Closed-form `E[eps^2]`; infinite when `b^2 >= K`.
    pub fn second_moment(&self) -> f64 {
        let ratio = self.b * self.b / self.k;
        if ratio >= 1.0 {
            f64::INFINITY
        } else {
            self.b0 * self.b0 * (1.0 - 1.0 / self.k) / (1.0 - ratio)
        }
    }
}

/// Precomputed sampler for the Weierstrass hierarchy.
///
/// Each draw consumes exactly one `u64`: the top 53 bits give the uniform
/// deviate for the level, bit 0 gives the sign.
#[derive(Debug, Clone)]
pub struct WmNoise {
    params: WmNoiseParams,
    // tail[j] = K^-j, so that level >= j iff u < tail[j].
    tail: [f64; MAX_LEVEL + 1],
    magnitude: [f64; MAX_LEVEL + 1],
}

impl WmNoise {
    pub fn new(params: WmNoiseParams) -> Self {
        let tail = std::array::from_fn(|j| params.k.powi(-(j as i32)));
        let magnitude = std::array::from_fn(|j| params.b0 * params.b.powi(j as i32));
        Self {
            params,
            tail,
            magnitude,
        }
    }

    pub fn params(&self) -> &WmNoiseParams {
        &self.params
    }

    #[inline]
    fn level_from_uniform(&self, u: f64) -> usize {
        // Branch-free count over the first levels; walk on only in the far tail.
        let mut j: usize = self.tail[1..=FAST_LEVELS].iter().map(|&t| (u < t) as usize).sum();
        if j == FAST_LEVELS {
            while j < MAX_LEVEL && u < self.tail[j + 1] {
                j += 1;
            }
        }
        j
    }

    #[inline]
    fn split(bits: u64) -> (f64, bool) {
        let u = (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (u, bits & 1 == 1)
    }

    #[inline]
    pub fn sample_level<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        let (u, _) = Self::split(rng.next_u64());
        self.level_from_uniform(u)
    }
}

impl NoiseSource for WmNoise {
    #[inline]
    fn sample<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let bits = rng.next_u64();
        let (u, _) = Self::split(bits);
        let m = self.magnitude[self.level_from_uniform(u)];
        // Bit 0 becomes the sign bit.
        f64::from_bits(m.to_bits() ^ (bits << 63))
    }
}

/// Draws a level `j` with `P(j) = (1 - 1/K) K^-j`.
pub fn sample_level<R: Rng + ?Sized>(params: &WmNoiseParams, rng: &mut R) -> usize {
    WmNoise::new(*params).sample_level(rng)
}

/// Draws one noise value `±b0 b^j`.
pub fn sample_noise<R: Rng + ?Sized>(params: &WmNoiseParams, rng: &mut R) -> f64 {
    WmNoise::new(*params).sample(rng)
}

/// Noise fixed at a constant value. Consumes no randomness.
#[derive(Debug, Clone, Copy)]
pub struct ConstantNoise(pub f64);

impl NoiseSource for ConstantNoise {
    #[inline]
    fn sample<R: RngCore + ?Sized>(&mut self, _rng: &mut R) -> f64 {
        self.0
    }
}

/// Replays a fixed list of noise values cyclically. Consumes no randomness.
#[derive(Debug, Clone)]
pub struct ReplayNoise {
    values: Vec<f64>,
    next: usize,
}

impl ReplayNoise {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "replay noise needs at least one value");
        Self { values, next: 0 }
    }
}

impl NoiseSource for ReplayNoise {
    fn sample<R: RngCore + ?Sized>(&mut self, _rng: &mut R) -> f64 {
        let v = self.values[self.next];
        self.next = (self.next + 1) % self.values.len();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DRAWS: usize = 1_000_000;

    #[test]
    fn default_exponent_exceeds_two() {
        let p = WmNoiseParams::default();
        assert!((p.pareto_exponent() - 2.321928094887362).abs() < 1e-12);
        assert!((p.second_moment() - 0.16).abs() < 1e-12);
    }

    #[test]
    fn level_probabilities_sum_to_one() {
        let p = WmNoiseParams::default();
        let total: f64 = (0..200).map(|j| p.level_probability(j)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((p.level_probability(0) - 0.8).abs() < 1e-15);
        let tail: f64 = (2..200).map(|j| p.level_probability(j)).sum();
        assert!((tail - 0.04).abs() < 1e-12);
    }

    #[test]
    fn level_zero_frequency() {
        let p = WmNoiseParams::default();
        let noise = WmNoise::new(p);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut zero = 0usize;
        let mut ge2 = 0usize;
        for _ in 0..DRAWS {
            let j = noise.sample_level(&mut rng);
            zero += (j == 0) as usize;
            ge2 += (j >= 2) as usize;
        }
        let n = DRAWS as f64;
        let sd0 = (0.8 * 0.2 / n).sqrt();
        assert!((zero as f64 / n - 0.8).abs() < 3.0 * sd0);
        let sd2 = (0.04 * 0.96 / n).sqrt();
        assert!((ge2 as f64 / n - 0.04).abs() < 3.0 * sd2);
    }

    #[test]
    fn same_seed_same_stream() {
        let p = WmNoiseParams::default();
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..1000).map(|_| sample_noise(&p, &mut a)).collect();
        let ys: Vec<f64> = (0..1000).map(|_| sample_noise(&p, &mut b)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn values_lie_on_the_magnitude_ladder() {
        let p = WmNoiseParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let e = sample_noise(&p, &mut rng);
            let j = (e.abs() / p.b0).log2().round();
            assert!((p.b0 * 2f64.powf(j) - e.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let err = WmNoiseParams::new(1.0, 0.5, -1.0).unwrap_err();
        match err {
            Error::Constraint(v) => assert_eq!(v.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn replay_cycles() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut r = ReplayNoise::new(vec![1.0, -2.0]);
        let got: Vec<f64> = (0..5).map(|_| r.sample(&mut rng)).collect();
        assert_eq!(got, vec![1.0, -2.0, 1.0, -2.0, 1.0]);
    }
}
