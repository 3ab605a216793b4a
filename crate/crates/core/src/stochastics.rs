//! Deterministic random streams and the sampling primitives built on them.
//!
//! Every stochastic operation in the crate takes an explicit [`RngStream`].
//! A stream wraps xoshiro256++ (period 2^256 - 1). Seeding goes through
//! SplitMix64, and independent streams for parallel jobs are derived with
//! [`mix_seed`] so that no state is shared between workers.

use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const KEY_SALT: u64 = 0x6A09_E667_F3BC_C909;

/// SplitMix64 output function applied to `x + GOLDEN_GAMMA`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a stream key into a 64-bit stream seed:
/// `splitmix64(master ^ splitmix64(key ^ KEY_SALT))`.
///
/// Both inputs pass through a full-avalanche bijection, so nearby keys
/// (job indices, consecutive reps) land on unrelated seeds.
pub fn mix_seed(master_seed: u64, stream_key: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(stream_key ^ KEY_SALT))
}

/// 64-bit FNV-1a, used to turn textual job keys into stream keys.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xCBF2_9CE4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// A single-owner deterministic random stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    inner: Xoshiro256PlusPlus,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    /// Stream for `(master_seed, stream_key)`; see [`mix_seed`].
    pub fn derive(master_seed: u64, stream_key: u64) -> Self {
        Self::new(mix_seed(master_seed, stream_key))
    }

    /// Stream keyed by a string, e.g. `"sphere/2/st/1/rep3"`.
    pub fn keyed(master_seed: u64, key: &str) -> Self {
        Self::derive(master_seed, fnv1a(key.as_bytes()))
    }

    /// Uniform in `[0, 1)` with 53 bits of mantissa.
    pub fn next_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// One draw from `N(mean, sd^2)`. With `sd == 0` the mean is returned
/// exactly and the stream is not advanced.
pub fn gaussian(stream: &mut RngStream, mean: f64, sd: f64) -> Result<f64> {
    if !(sd >= 0.0) || !sd.is_finite() {
        return Err(Error::param("sd", format!("must be finite and >= 0, got {sd}")));
    }
    if sd == 0.0 {
        return Ok(mean);
    }
    Ok(mean + sd * stream.standard_normal())
}

/// A unit vector in R^n.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Vec<f64>);

impl Direction {
    /// Normalizes `v`; fails if its norm is zero or not finite.
    pub fn from_vec(mut v: Vec<f64>) -> Result<Self> {
        let norm = norm2(&v);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::param("direction", "cannot normalize a zero or non-finite vector"));
        }
        v.iter_mut().for_each(|c| *c /= norm);
        Ok(Self(v))
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Uniformly distributed direction on the unit sphere in R^n, obtained by
/// normalizing a vector of independent standard Gaussians.
pub fn uniform_sphere_direction(stream: &mut RngStream, n: usize) -> Result<Direction> {
    if n == 0 {
        return Err(Error::param("n", "dimension must be >= 1"));
    }
    let mut v = vec![0.0; n];
    loop {
        v.iter_mut().for_each(|c| *c = stream.standard_normal());
        let norm = norm2(&v);
        if norm >= 1e-300 {
            v.iter_mut().for_each(|c| *c /= norm);
            return Ok(Direction(v));
        }
    }
}

/// Cosine between `-gradient` and `d`.
pub fn descent_quality(gradient: &[f64], d: &Direction) -> Result<f64> {
    if gradient.len() != d.dim() {
        return Err(Error::param(
            "gradient",
            format!("length {} does not match direction length {}", gradient.len(), d.dim()),
        ));
    }
    let gnorm = norm2(gradient);
    if gnorm == 0.0 {
        return Err(Error::UndefinedQuality);
    }
    let dot: f64 = gradient.iter().zip(d.components()).map(|(g, c)| g * c).sum();
    Ok((-dot / (gnorm * norm2(d.components()))).clamp(-1.0, 1.0))
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn degenerate_gaussian_returns_mean() {
        let mut s = RngStream::new(1);
        let before = s.clone();
        assert_eq!(gaussian(&mut s, 3.5, 0.0).unwrap(), 3.5);
        assert_eq!(s, before);
    }

    #[test]
    fn negative_sd_is_rejected() {
        let mut s = RngStream::new(1);
        assert!(matches!(gaussian(&mut s, 0.0, -1.0), Err(Error::Parameter { .. })));
        assert!(gaussian(&mut s, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let mut s = RngStream::new(7);
        let xs: Vec<f64> = (0..100_000).map(|_| gaussian(&mut s, 0.0, 1.0).unwrap()).collect();
        let (mean, var) = mean_var(&xs);
        assert!(mean.abs() < 0.01, "mean {mean}");
        // sd of the sample variance is sqrt(2/(N-1)) ~ 0.0045; 0.02 is > 4 sd.
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn equal_seeds_agree_for_a_million_draws() {
        let mut a = RngStream::new(0xDEADBEEF);
        let mut b = RngStream::new(0xDEADBEEF);
        for _ in 0..1_000_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_streams_differ() {
        let mut a = RngStream::derive(42, 0);
        let mut b = RngStream::derive(42, 1);
        let mut c = RngStream::derive(43, 0);
        let (x, y, z) = (a.next_u64(), b.next_u64(), c.next_u64());
        assert_ne!(x, y);
        assert_ne!(x, z);
        assert_ne!(y, z);
        assert_eq!(RngStream::keyed(5, "a/b"), RngStream::derive(5, fnv1a(b"a/b")));
    }

    #[test]
    fn derived_streams_are_uncorrelated() {
        let mut a = RngStream::derive(9, 100);
        let mut b = RngStream::derive(9, 101);
        let n = 100_000;
        let r: f64 = (0..n).map(|_| a.standard_normal() * b.standard_normal()).sum::<f64>() / n as f64;
        // correlation estimate has sd 1/sqrt(n) ~ 0.0032
        assert!(r.abs() < 0.015, "corr {r}");
    }

    #[test]
    fn fnv1a_reference_values() {
        assert_eq!(fnv1a(b""), 0xCBF2_9CE4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xAF63_DC4C_8601_EC8C);
    }

    #[test]
    fn sphere_rejects_zero_dimension() {
        let mut s = RngStream::new(0);
        assert!(uniform_sphere_direction(&mut s, 0).is_err());
    }

    #[test]
    fn sphere_in_one_dimension_is_a_fair_sign() {
        let mut s = RngStream::new(3);
        let n = 100_000;
        let mut plus = 0usize;
        for _ in 0..n {
            let d = uniform_sphere_direction(&mut s, 1).unwrap();
            let v = d.components()[0];
            assert!(v == 1.0 || v == -1.0);
            plus += usize::from(v > 0.0);
        }
        let freq = plus as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn sphere_componentwise_mean_is_zero() {
        let mut s = RngStream::new(11);
        let n = 100_000;
        let mut acc = [0.0; 3];
        for _ in 0..n {
            let d = uniform_sphere_direction(&mut s, 3).unwrap();
            acc.iter_mut().zip(d.components()).for_each(|(a, c)| *a += c);
        }
        for a in acc {
            assert!((a / n as f64).abs() < 0.01);
        }
    }

    #[test]
    fn sphere_angle_is_uniform_in_two_dimensions() {
        // Uniform angle on the circle: the first coordinate is cos(U), U ~ U(-pi, pi),
        // so P(x1 <= t) = 1 - acos(t)/pi.
        let mut s = RngStream::new(21);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| uniform_sphere_direction(&mut s, 2).unwrap().components()[0])
            .collect();
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = 1.0 - x.clamp(-1.0, 1.0).acos() / std::f64::consts::PI;
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                (cdf - lo).abs().max((hi - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn descent_quality_examples() {
        let d = |v: &[f64]| Direction::from_vec(v.to_vec()).unwrap();
        assert_eq!(descent_quality(&[1.0, 0.0], &d(&[-1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(descent_quality(&[1.0, 0.0], &d(&[0.0, 1.0])).unwrap(), 0.0);
        let k = descent_quality(&[1.0, 1.0], &d(&[-1.0, 0.0])).unwrap();
        assert!((k - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(
            descent_quality(&[0.0, 0.0], &d(&[1.0, 0.0])),
            Err(Error::UndefinedQuality)
        ));
    }

    #[test]
    fn descent_probability_lower_bound() {
        // P(kappa >= 1/(7 sqrt n)) >= 3/7 for uniform directions.
        for (i, n) in [2usize, 10, 100].into_iter().enumerate() {
            let mut s = RngStream::derive(99, i as u64);
            let mut g = vec![0.0; n];
            g[0] = 1.0;
            let threshold = 1.0 / (7.0 * (n as f64).sqrt());
            let trials = 100_000;
            let hits = (0..trials)
                .filter(|_| {
                    let d = uniform_sphere_direction(&mut s, n).unwrap();
                    descent_quality(&g, &d).unwrap() >= threshold
                })
                .count();
            let p = hits as f64 / trials as f64;
            assert!(p >= 3.0 / 7.0 - 3.0 * (0.25f64 / trials as f64).sqrt(), "n={n}: {p}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn directions_have_unit_norm(seed in any::<u64>(), n in 1usize..64) {
                let mut s = RngStream::new(seed);
                let d = uniform_sphere_direction(&mut s, n).unwrap();
                prop_assert!((norm2(d.components()) - 1.0).abs() < 1e-12);
            }

            #[test]
            fn descent_quality_is_a_cosine(
                g in proptest::collection::vec(-10.0f64..10.0, 4),
                seed in any::<u64>(),
            ) {
                prop_assume!(norm2(&g) > 1e-9);
                let mut s = RngStream::new(seed);
                let d = uniform_sphere_direction(&mut s, 4).unwrap();
                let k = descent_quality(&g, &d).unwrap();
                prop_assert!((-1.0..=1.0).contains(&k));
            }
        }
    }
}
