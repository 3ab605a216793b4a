//! Browser bindings for three interactive views: a single sequential-test
//! walk between its boundaries, expected sample size against the mean, and
//! the best-so-far curves of both solvers on one problem.
//!
//! The `*_json` functions hold the logic and are plain Rust; the
//! `#[wasm_bindgen]` wrappers only convert errors for JavaScript.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use seqdfo::testing::{
    c_accurate_boundary, default_cap, run_sequential_test, sample_size_bound,
    sample_size_bound_tight, wald_expected_sample_size, BoundarySchedule, Hypothesis,
};
use seqdfo::verify::estimate_expected_sample_size;
use seqdfo::{builtin_problem, run_direct_search, RngStream, SearchConfig, TestKind};

const MAX_TRIALS: u64 = 20_000;
const MAX_POINTS: usize = 200;
const MAX_BUDGET: u64 = 200_000;

#[derive(Serialize)]
struct Walk {
    partial_sums: Vec<f64>,
    upper: f64,
    lower: f64,
    cap: u64,
    accepted: &'static str,
    samples_used: u64,
    capped: bool,
}

/// One run of the sequential test on `Y ~ N(mu, sigma2)` at accuracy `C`.
pub fn sequential_walk_json(mu: f64, sigma2: f64, accuracy: f64, seed: u64) -> Result<String, String> {
    let c0 = c_accurate_boundary(sigma2, accuracy).map_err(|e| e.to_string())?;
    let cap = default_cap(sigma2, accuracy).map_err(|e| e.to_string())?;
    let schedule = BoundarySchedule::constant_symmetric(c0, cap).map_err(|e| e.to_string())?;
    let sd = sigma2.sqrt();
    let mut stream = RngStream::new(seed);
    let mut y = |s: &mut RngStream| mu + sd * s.standard_normal();
    let t = run_sequential_test(&mut y, &schedule, &mut stream).map_err(|e| e.to_string())?;
    to_json(&Walk {
        partial_sums: t.partial_sums,
        upper: c0,
        lower: -c0,
        cap,
        accepted: match t.decision.accepted {
            Hypothesis::H0 => "H0",
            Hypothesis::H1 => "H1",
        },
        samples_used: t.decision.samples_used,
        capped: t.decision.capped,
    })
}

#[derive(Serialize)]
struct SampleSizeCurve {
    mu: Vec<f64>,
    approximation: Vec<f64>,
    bound: Vec<f64>,
    bound_tight: Vec<f64>,
    monte_carlo: Vec<f64>,
    monte_carlo_stderr: Vec<f64>,
}

/// Expected sample size over `points` means in `[0, mu_max]`: the
/// approximation, both bounds and a Monte Carlo estimate.
pub fn sample_size_curve_json(
    sigma2: f64,
    accuracy: f64,
    mu_max: f64,
    points: usize,
    trials: u64,
    seed: u64,
) -> Result<String, String> {
    if !(mu_max > 0.0) || !mu_max.is_finite() {
        return Err(format!("mu_max must be finite and > 0, got {mu_max}"));
    }
    let points = points.clamp(2, MAX_POINTS);
    let trials = trials.clamp(100, MAX_TRIALS);
    let mut stream = RngStream::new(seed);
    let mut c = SampleSizeCurve {
        mu: Vec::new(),
        approximation: Vec::new(),
        bound: Vec::new(),
        bound_tight: Vec::new(),
        monte_carlo: Vec::new(),
        monte_carlo_stderr: Vec::new(),
    };
    for i in 0..points {
        let mu = mu_max * i as f64 / (points - 1) as f64;
        let err = |e: seqdfo::Error| e.to_string();
        c.approximation.push(wald_expected_sample_size(mu, sigma2, accuracy).map_err(err)?);
        c.bound.push(sample_size_bound(mu, sigma2, accuracy).map_err(err)?);
        c.bound_tight.push(sample_size_bound_tight(mu, sigma2, accuracy).map_err(err)?);
        let m = estimate_expected_sample_size(mu, sigma2, accuracy, trials, &mut stream).map_err(err)?;
        c.monte_carlo.push(m.mean);
        c.monte_carlo_stderr.push(m.stderr);
        c.mu.push(mu);
    }
    to_json(&c)
}

#[derive(Serialize)]
struct SolverCurve {
    solver: &'static str,
    /// `[oracle calls, best true f]` pairs.
    best: Vec<(u64, f64)>,
    iterations: usize,
    accepted: usize,
}

/// Best true objective value against oracle calls for both solvers, run
/// from the same seed.
pub fn search_trace_json(problem: &str, n: usize, sigma2_f: f64, budget: u64, seed: u64) -> Result<String, String> {
    let p = builtin_problem(problem, n).map_err(|e| e.to_string())?;
    let budget = budget.min(MAX_BUDGET);
    let curves = [TestKind::Sequential, TestKind::FixedSample]
        .into_iter()
        .map(|kind| {
            let cfg = SearchConfig::standard(kind, sigma2_f).with_budget(budget);
            let t = run_direct_search(&cfg, &p, &mut RngStream::new(seed)).map_err(|e| e.to_string())?;
            Ok(SolverCurve {
                solver: kind.label(),
                best: t.best_true_f_by_calls.clone(),
                iterations: t.records.len(),
                accepted: t.records.iter().filter(|r| r.accepted).count(),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    to_json(&curves)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn sequential_walk(mu: f64, sigma2: f64, accuracy: f64, seed: u64) -> Result<String, JsValue> {
    sequential_walk_json(mu, sigma2, accuracy, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sample_size_curve(
    sigma2: f64,
    accuracy: f64,
    mu_max: f64,
    points: usize,
    trials: u64,
    seed: u64,
) -> Result<String, JsValue> {
    sample_size_curve_json(sigma2, accuracy, mu_max, points, trials, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn search_trace(problem: &str, n: usize, sigma2_f: f64, budget: u64, seed: u64) -> Result<String, JsValue> {
    search_trace_json(problem, n, sigma2_f, budget, seed).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn walk_stops_at_a_boundary() {
        let v: Value = serde_json::from_str(&sequential_walk_json(0.0, 1.0, 0.1, 3).unwrap()).unwrap();
        let sums = v["partial_sums"].as_array().unwrap();
        let last = sums.last().unwrap().as_f64().unwrap();
        let upper = v["upper"].as_f64().unwrap();
        assert_eq!(sums.len() as u64, v["samples_used"].as_u64().unwrap());
        assert!(last >= upper || last <= -upper || v["capped"].as_bool().unwrap());
        assert!(sequential_walk_json(0.0, 1.0, -1.0, 3).is_err());
    }

    #[test]
    fn curve_has_matching_lengths() {
        let v: Value = serde_json::from_str(&sample_size_curve_json(1.0, 0.1, 1.0, 5, 200, 1).unwrap()).unwrap();
        for key in ["mu", "approximation", "bound", "bound_tight", "monte_carlo"] {
            assert_eq!(v[key].as_array().unwrap().len(), 5, "{key}");
        }
        assert!(sample_size_curve_json(1.0, 0.1, 0.0, 5, 200, 1).is_err());
    }

    #[test]
    fn trace_has_both_solvers() {
        let v: Value = serde_json::from_str(&search_trace_json("sphere", 2, 0.01, 4000, 2).unwrap()).unwrap();
        let arr = v.as_array().unwrap();
        assert_eq!(arr.len(), 2);
        assert_eq!(arr[0]["solver"], "st");
        assert_eq!(arr[1]["solver"], "ft");
        assert!(search_trace_json("nope", 2, 0.01, 100, 0).is_err());
    }
}
