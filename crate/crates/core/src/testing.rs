//! Sequential and fixed-sample tests for the sign of a mean.
//!
//! Both tests decide between `H0: mu <= 0` and `H1: mu > 0` for a random
//! variable `Y`. In the optimizer `Y` is the sufficient-decrease observable,
//! so `H0` means "accept the step" and `H1` means "reject it".
//!
//! The sequential test draws until the running sum leaves the band
//! `(b_l, a_l)`. With constant symmetric boundaries `a_l = -b_l = c0` and
//! Gaussian `Y`, choosing `c0 = sigma^2 / (2 e C)` makes the test
//! C-accurate: `P(H1 | mu <= 0) <= 1/2` and `P(H0 | mu > 0) <= C / mu`.

use std::f64::consts::E;

use crate::error::{Error, Result};
use crate::stochastics::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    /// `mu <= 0`
    H0,
    /// `mu > 0`
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisDecision {
    pub accepted: Hypothesis,
    pub samples_used: u64,
    pub final_sum: f64,
    /// The draw cap was hit before either boundary was crossed.
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Boundaries {
    /// `a_l = c0`, `b_l = -c0` for every `l`.
    ConstantSymmetric { c0: f64 },
    /// Per-step boundaries; entries may be infinite. `upper[l-1]` is `a_l`.
    Explicit { upper: Vec<f64>, lower: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySchedule {
    boundaries: Boundaries,
    cap: u64,
}

impl BoundarySchedule {
    /// `c0 = 0` is accepted: the boundaries collapse and the test decides on
    /// the sign of the first draw, which is what noiseless evaluation needs.
    pub fn constant_symmetric(c0: f64, cap: u64) -> Result<Self> {
        if !(c0 >= 0.0) || !c0.is_finite() {
            return Err(Error::param("c0", format!("must be finite and >= 0, got {c0}")));
        }
        if cap == 0 {
            return Err(Error::param("cap", "must be >= 1"));
        }
        Ok(Self {
            boundaries: Boundaries::ConstantSymmetric { c0 },
            cap,
        })
    }

    /// The cap equals the sequence length.
    pub fn explicit(upper: Vec<f64>, lower: Vec<f64>) -> Result<Self> {
        if upper.len() != lower.len() {
            return Err(Error::param("boundaries", "upper and lower sequences differ in length"));
        }
        if upper.is_empty() {
            return Err(Error::param("cap", "must be >= 1"));
        }
        if let Some(l) = upper
            .iter()
            .zip(&lower)
            .position(|(a, b)| a.is_nan() || b.is_nan() || a < b)
        {
            return Err(Error::param(
                "boundaries",
                format!("need a_l >= b_l, violated at l = {}", l + 1),
            ));
        }
        let cap = upper.len() as u64;
        Ok(Self {
            boundaries: Boundaries::Explicit { upper, lower },
            cap,
        })
    }

    /// Test 2 written as an instance of Test 1: infinite boundaries before
    /// step `m`, both boundaries at zero on step `m`.
    pub fn fixed_sample_equivalent(m: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("m", "must be >= 1"));
        }
        let m = m as usize;
        let mut upper = vec![f64::INFINITY; m];
        let mut lower = vec![f64::NEG_INFINITY; m];
        upper[m - 1] = 0.0;
        lower[m - 1] = 0.0;
        Self::explicit(upper, lower)
    }

    pub fn boundaries(&self) -> &Boundaries {
        &self.boundaries
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    /// `(b_l, a_l)` for a 1-based step index `l <= cap`.
    pub fn bounds_at(&self, l: u64) -> (f64, f64) {
        match &self.boundaries {
            Boundaries::ConstantSymmetric { c0 } => (-c0, *c0),
            Boundaries::Explicit { upper, lower } => {
                let i = (l - 1) as usize;
                (lower[i], upper[i])
            }
        }
    }
}

/// Source of i.i.d. observations of `Y`.
pub trait YSampler {
    fn draw(&mut self, stream: &mut RngStream) -> f64;
}

impl<F> YSampler for F
where
    F: FnMut(&mut RngStream) -> f64,
{
    fn draw(&mut self, stream: &mut RngStream) -> f64 {
        self(stream)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestTranscript {
    pub decision: HypothesisDecision,
    /// `partial_sums[l]` is the sum of the first `l + 1` draws.
    pub partial_sums: Vec<f64>,
}

/// Minimal boundary `c0 = sigma2 / (2 e C)` for a C-accurate sequential test.
pub fn c_accurate_boundary(sigma2: f64, accuracy: f64) -> Result<f64> {
    check_positive("sigma2", sigma2)?;
    check_positive("C", accuracy)?;
    Ok(sigma2 / (2.0 * E * accuracy))
}

/// `ceil(sigma2 / C^2)`, the fixed sample size that meets `C / mu` by
/// Markov's inequality. Saturates at `u64::MAX`.
pub fn fixed_sample_size(sigma2: f64, accuracy: f64) -> Result<u64> {
    check_positive("sigma2", sigma2)?;
    check_positive("C", accuracy)?;
    Ok(((sigma2 / (accuracy * accuracy)).ceil() as u64).max(1))
}

/// Draw cap used when none is given: ten times the fixed sample size.
pub fn default_cap(sigma2: f64, accuracy: f64) -> Result<u64> {
    Ok(fixed_sample_size(sigma2, accuracy)?.saturating_mul(10))
}

/// Brownian approximation of the expected sample size of the sequential
/// test with `c0 = sigma2 / (2 e C)`:
///
/// `sigma2 / (2 e C mu) * (e^x - 1) / (e^x + 1)` with `x = mu / (e C)`.
///
/// The `mu -> 0` limit `sigma2 / (4 e^2 C^2)` is returned at `mu == 0`.
pub fn wald_expected_sample_size(mu: f64, sigma2: f64, accuracy: f64) -> Result<f64> {
    check_positive("sigma2", sigma2)?;
    check_positive("C", accuracy)?;
    if mu == 0.0 {
        return Ok(sigma2 / (4.0 * E * E * accuracy * accuracy));
    }
    let x = mu / (E * accuracy);
    // (e^x - 1)/(e^x + 1) = tanh(x/2)
    Ok(sigma2 / (2.0 * E * accuracy * mu) * (x / 2.0).tanh())
}

/// `sigma2 / (4 e^2 C^2) * min(1, e C / |mu|)`.
///
/// Dominates [`wald_expected_sample_size`] for `|mu| <= e C` only; use
/// [`sample_size_bound_tight`] for a bound valid at every `mu`.
pub fn sample_size_bound(mu: f64, sigma2: f64, accuracy: f64) -> Result<f64> {
    check_positive("sigma2", sigma2)?;
    check_positive("C", accuracy)?;
    let base = sigma2 / (4.0 * E * E * accuracy * accuracy);
    let ratio = if mu == 0.0 {
        1.0
    } else {
        (E * accuracy / mu.abs()).min(1.0)
    };
    Ok(base * ratio)
}

/// Bound of the same shape that does dominate the approximation for every
/// `mu`: `sigma2 / (4 e^2 C^2) * min(1, 2 e C / |mu|)`.
///
/// [`sample_size_bound`]'s second branch is half the large-`mu` limit
/// `sigma2 / (2 e C mu)` of [`wald_expected_sample_size`], so it only holds
/// for `|mu| <= e C`.
pub fn sample_size_bound_tight(mu: f64, sigma2: f64, accuracy: f64) -> Result<f64> {
    check_positive("sigma2", sigma2)?;
    check_positive("C", accuracy)?;
    let base = sigma2 / (4.0 * E * E * accuracy * accuracy);
    let ratio = if mu == 0.0 {
        1.0
    } else {
        (2.0 * E * accuracy / mu.abs()).min(1.0)
    };
    Ok(base * ratio)
}

/// Runs the sequential test and records every partial sum.
pub fn run_sequential_test<S: YSampler + ?Sized>(
    sampler: &mut S,
    schedule: &BoundarySchedule,
    stream: &mut RngStream,
) -> Result<TestTranscript> {
    let mut partial_sums = Vec::new();
    let decision = sequential_core(sampler, schedule, stream, Some(&mut partial_sums));
    Ok(TestTranscript {
        decision,
        partial_sums,
    })
}

/// Same draws and decision as [`run_sequential_test`] without keeping the
/// transcript. Used by the Monte Carlo estimators and the optimizer.
pub fn sequential_decision<S: YSampler + ?Sized>(
    sampler: &mut S,
    schedule: &BoundarySchedule,
    stream: &mut RngStream,
) -> HypothesisDecision {
    sequential_core(sampler, schedule, stream, None)
}

fn sequential_core<S: YSampler + ?Sized>(
    sampler: &mut S,
    schedule: &BoundarySchedule,
    stream: &mut RngStream,
    mut record: Option<&mut Vec<f64>>,
) -> HypothesisDecision {
    let mut sum = 0.0;
    for l in 1..=schedule.cap {
        sum += sampler.draw(stream);
        if let Some(rec) = record.as_deref_mut() {
            rec.push(sum);
        }
        let (lower, upper) = schedule.bounds_at(l);
        // When both boundaries are hit (lower == upper == sum) the tie goes
        // to H0, matching the fixed-sample rule `sum <= 0 => H0`.
        let accepted = if sum <= lower {
            Some(Hypothesis::H0)
        } else if sum >= upper {
            Some(Hypothesis::H1)
        } else {
            None
        };
        if let Some(accepted) = accepted {
            return HypothesisDecision {
                accepted,
                samples_used: l,
                final_sum: sum,
                capped: false,
            };
        }
    }
    // Truncated: H0 only on a strictly negative sum; rejecting is the safe side.
    HypothesisDecision {
        accepted: if sum < 0.0 { Hypothesis::H0 } else { Hypothesis::H1 },
        samples_used: schedule.cap,
        final_sum: sum,
        capped: true,
    }
}

/// Draws exactly `m` samples; `H0` iff their sum is `<= 0`.
pub fn run_fixed_test<S: YSampler + ?Sized>(
    sampler: &mut S,
    m: u64,
    stream: &mut RngStream,
) -> Result<TestTranscript> {
    if m == 0 {
        return Err(Error::param("m", "must be >= 1"));
    }
    let mut partial_sums = Vec::with_capacity(m as usize);
    let mut sum = 0.0;
    for _ in 0..m {
        sum += sampler.draw(stream);
        partial_sums.push(sum);
    }
    Ok(TestTranscript {
        decision: fixed_outcome(sum, m),
        partial_sums,
    })
}

pub fn fixed_decision<S: YSampler + ?Sized>(
    sampler: &mut S,
    m: u64,
    stream: &mut RngStream,
) -> Result<HypothesisDecision> {
    if m == 0 {
        return Err(Error::param("m", "must be >= 1"));
    }
    let sum = (0..m).map(|_| sampler.draw(stream)).sum();
    Ok(fixed_outcome(sum, m))
}

fn fixed_outcome(sum: f64, m: u64) -> HypothesisDecision {
    HypothesisDecision {
        accepted: if sum <= 0.0 { Hypothesis::H0 } else { Hypothesis::H1 },
        samples_used: m,
        final_sum: sum,
        capped: false,
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastics::gaussian;

    fn constant(y: f64) -> impl FnMut(&mut RngStream) -> f64 {
        move |_: &mut RngStream| y
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn boundary_formula() {
        assert!(close(c_accurate_boundary(1.0, 0.1).unwrap(), 1.8394, 1e-4));
        assert!(close(c_accurate_boundary(2.0, 1.0).unwrap(), 1.0 / E, 1e-12));
        assert!(close(c_accurate_boundary(1.0, 0.0309524).unwrap(), 5.9426, 1e-3));
        assert!(c_accurate_boundary(0.0, 1.0).is_err());
        assert!(c_accurate_boundary(1.0, -1.0).is_err());
    }

    #[test]
    fn fixed_size_formula() {
        assert_eq!(fixed_sample_size(1.0, 0.1).unwrap(), 100);
        assert_eq!(fixed_sample_size(1.0, 0.0309524).unwrap(), 1044);
        assert_eq!(fixed_sample_size(0.01, 0.1).unwrap(), 1);
        assert!(fixed_sample_size(-1.0, 0.1).is_err());
        assert_eq!(default_cap(1.0, 0.1).unwrap(), 1000);
    }

    #[test]
    fn wald_approximation_values() {
        assert!(close(wald_expected_sample_size(0.0, 1.0, 0.01).unwrap(), 338.34, 0.01));
        assert!(close(wald_expected_sample_size(E * 0.01, 1.0, 0.01).unwrap(), 312.7, 0.5));
        for mu in [0.001, 0.03, 0.5, 7.0] {
            let p = wald_expected_sample_size(mu, 1.0, 0.01).unwrap();
            let n = wald_expected_sample_size(-mu, 1.0, 0.01).unwrap();
            assert!(close(p, n, 1e-12 * p));
        }
        // continuity at zero
        let near = wald_expected_sample_size(1e-9, 1.0, 0.01).unwrap();
        assert!(close(near, 338.34, 0.01));
    }

    #[test]
    fn bound_values_and_dominance() {
        assert!(close(sample_size_bound(0.0, 1.0, 0.01).unwrap(), 338.34, 0.01));
        assert!(close(sample_size_bound(2.0 * E * 0.01, 1.0, 0.01).unwrap(), 169.17, 0.01));
        let c = 0.01;
        for mu in [0.0, E * c, 2.0 * E * c, 10.0 * E * c] {
            let w = wald_expected_sample_size(mu, 1.0, c).unwrap();
            let b = sample_size_bound(mu, 1.0, c).unwrap();
            let tight = sample_size_bound_tight(mu, 1.0, c).unwrap();
            assert!(w <= tight * (1.0 + 1e-12), "mu={mu}: {w} > {tight}");
            if mu <= E * c {
                assert!(w <= b, "mu={mu}: {w} > {b}");
            } else {
                // the min(1, eC/|mu|) branch undershoots the approximation here
                assert!(w > b, "mu={mu}: {w} <= {b}");
            }
        }
        assert!((wald_expected_sample_size(10.0 * E * c, 1.0, c).unwrap() - 67.67).abs() < 0.01);
    }

    #[test]
    fn deterministic_walks() {
        let sched = BoundarySchedule::constant_symmetric(2.5, 100).unwrap();
        let mut s = RngStream::new(0);
        let up = run_sequential_test(&mut constant(1.0), &sched, &mut s).unwrap();
        assert_eq!(up.decision.accepted, Hypothesis::H1);
        assert_eq!(up.decision.samples_used, 3);
        assert_eq!(up.decision.final_sum, 3.0);
        assert!(!up.decision.capped);
        assert_eq!(up.partial_sums, vec![1.0, 2.0, 3.0]);

        let down = run_sequential_test(&mut constant(-1.0), &sched, &mut s).unwrap();
        assert_eq!(down.decision.accepted, Hypothesis::H0);
        assert_eq!(down.decision.samples_used, 3);
        assert_eq!(down.decision.final_sum, -3.0);

        let sched = BoundarySchedule::constant_symmetric(2.5, 10).unwrap();
        let flat = run_sequential_test(&mut constant(0.0), &sched, &mut s).unwrap();
        assert!(flat.decision.capped);
        assert_eq!(flat.decision.samples_used, 10);
        assert_eq!(flat.decision.accepted, Hypothesis::H1);

        let neg = run_sequential_test(&mut constant(-0.1), &sched, &mut s).unwrap();
        assert!(neg.decision.capped);
        assert_eq!(neg.decision.accepted, Hypothesis::H0);
    }

    #[test]
    fn collapsed_boundaries_decide_on_first_sign() {
        let sched = BoundarySchedule::constant_symmetric(0.0, 10).unwrap();
        let mut s = RngStream::new(0);
        for (y, h) in [(0.3, Hypothesis::H1), (-0.3, Hypothesis::H0), (0.0, Hypothesis::H0)] {
            let d = sequential_decision(&mut constant(y), &sched, &mut s);
            assert_eq!((d.accepted, d.samples_used), (h, 1));
        }
    }

    #[test]
    fn fixed_test_examples() {
        let mut s = RngStream::new(0);
        let t = run_fixed_test(&mut constant(-1.0), 5, &mut s).unwrap();
        assert_eq!((t.decision.accepted, t.decision.final_sum), (Hypothesis::H0, -5.0));
        let t = run_fixed_test(&mut constant(1.0), 5, &mut s).unwrap();
        assert_eq!((t.decision.accepted, t.decision.final_sum), (Hypothesis::H1, 5.0));
        let t = run_fixed_test(&mut constant(0.0), 3, &mut s).unwrap();
        assert_eq!(t.decision.accepted, Hypothesis::H0);
        assert_eq!(t.partial_sums.len(), 3);
        assert!(run_fixed_test(&mut constant(0.0), 0, &mut s).is_err());
        assert!(fixed_decision(&mut constant(0.0), 0, &mut s).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(BoundarySchedule::constant_symmetric(1.0, 0).is_err());
        assert!(BoundarySchedule::constant_symmetric(-1.0, 5).is_err());
        assert!(BoundarySchedule::explicit(vec![1.0, 0.0], vec![0.0, 0.5]).is_err());
        assert!(BoundarySchedule::explicit(vec![], vec![]).is_err());
        assert!(BoundarySchedule::explicit(vec![1.0], vec![0.0, 0.0]).is_err());
        let s = BoundarySchedule::explicit(vec![f64::INFINITY, 0.0], vec![f64::NEG_INFINITY, 0.0])
            .unwrap();
        assert_eq!(s.cap(), 2);
        assert!(BoundarySchedule::fixed_sample_equivalent(0).is_err());
    }

    #[test]
    fn symmetric_boundaries_give_even_odds_at_zero_mean() {
        let c0 = c_accurate_boundary(1.0, 0.1).unwrap();
        let sched = BoundarySchedule::constant_symmetric(c0, default_cap(1.0, 0.1).unwrap()).unwrap();
        let mut s = RngStream::new(2024);
        let n = 100_000;
        let h1 = (0..n)
            .filter(|_| {
                let mut y = |st: &mut RngStream| gaussian(st, 0.0, 1.0).unwrap();
                sequential_decision(&mut y, &sched, &mut s).accepted == Hypothesis::H1
            })
            .count();
        let p = h1 as f64 / n as f64;
        assert!((p - 0.5).abs() <= 3.0 * (0.25 / n as f64).sqrt(), "{p}");
    }

    #[test]
    fn unbounded_walks_end_properly() {
        // bounded boundaries + nondegenerate Y: no run should reach a huge cap
        let sched = BoundarySchedule::constant_symmetric(3.0, 1_000_000).unwrap();
        let mut s = RngStream::new(77);
        for _ in 0..10_000 {
            let mut y = |st: &mut RngStream| gaussian(st, 0.0, 1.0).unwrap();
            assert!(!sequential_decision(&mut y, &sched, &mut s).capped);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn no_premature_crossing(
                seed in any::<u64>(),
                mu in -1.0f64..1.0,
                c0 in 0.1f64..5.0,
            ) {
                let sched = BoundarySchedule::constant_symmetric(c0, 10_000).unwrap();
                let mut s = RngStream::new(seed);
                let mut y = |st: &mut RngStream| gaussian(st, mu, 1.0).unwrap();
                let t = run_sequential_test(&mut y, &sched, &mut s).unwrap();
                let m = t.decision.samples_used as usize;
                prop_assert!(m >= 1);
                prop_assert_eq!(t.partial_sums.len(), m);
                for (l, &sum) in t.partial_sums[..m - 1].iter().enumerate() {
                    let (b, a) = sched.bounds_at(l as u64 + 1);
                    prop_assert!(b < sum && sum < a);
                }
                let last = t.partial_sums[m - 1];
                prop_assert_eq!(last, t.decision.final_sum);
                if !t.decision.capped {
                    match t.decision.accepted {
                        Hypothesis::H0 => prop_assert!(last <= -c0),
                        Hypothesis::H1 => prop_assert!(last >= c0),
                    }
                }
            }

            #[test]
            fn fixed_test_is_an_instance_of_the_sequential_test(
                seed in any::<u64>(),
                mu in -0.5f64..0.5,
                m in 1u64..200,
            ) {
                let mut y = |st: &mut RngStream| gaussian(st, mu, 1.0).unwrap();
                let fixed = run_fixed_test(&mut y, m, &mut RngStream::new(seed)).unwrap();
                let sched = BoundarySchedule::fixed_sample_equivalent(m).unwrap();
                let seq = run_sequential_test(&mut y, &sched, &mut RngStream::new(seed)).unwrap();
                prop_assert_eq!(fixed.decision.accepted, seq.decision.accepted);
                prop_assert_eq!(fixed.decision.samples_used, seq.decision.samples_used);
                prop_assert_eq!(fixed.decision.final_sum, seq.decision.final_sum);
                prop_assert!(!seq.decision.capped);
            }

            #[test]
            fn tight_bound_dominates_the_approximation(
                mu in -50.0f64..50.0,
                sigma2 in 0.01f64..10.0,
                c in 1e-4f64..1.0,
            ) {
                let w = wald_expected_sample_size(mu, sigma2, c).unwrap();
                let b = sample_size_bound_tight(mu, sigma2, c).unwrap();
                prop_assert!(w <= b * (1.0 + 1e-12));
                prop_assert!(sample_size_bound(mu, sigma2, c).unwrap() <= b);
            }

            #[test]
            fn recording_does_not_change_the_outcome(seed in any::<u64>(), mu in -0.3f64..0.3) {
                let sched = BoundarySchedule::constant_symmetric(2.0, 500).unwrap();
                let mut y = |st: &mut RngStream| gaussian(st, mu, 1.0).unwrap();
                let a = run_sequential_test(&mut y, &sched, &mut RngStream::new(seed)).unwrap();
                let b = sequential_decision(&mut y, &sched, &mut RngStream::new(seed));
                prop_assert_eq!(a.decision, b);
            }
        }
    }
}
