//! Probabilistic-descent direct search with a statistical acceptance test.
//!
//! Each iteration polls one uniformly random direction `D_k`, tests whether
//! `f(X_k) - f(X_k + Delta_k D_k) >= c Delta_k^2` at accuracy
//! `C_k = c Delta_k^2 (1 - theta^2) / (2 (gamma^2 - theta^2))`, then expands
//! the stepsize by `gamma` on acceptance or contracts it by `theta`.

use crate::error::{ConfigError, Result};
use crate::oracle::{DecreaseObservable, GaussianNoiseModel, Problem};
use crate::stochastics::{uniform_sphere_direction, RngStream};
use crate::testing::{
    c_accurate_boundary, fixed_decision, sequential_decision, BoundarySchedule, Hypothesis,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TestKind {
    Sequential,
    FixedSample,
}

impl TestKind {
    pub fn label(self) -> &'static str {
        match self {
            TestKind::Sequential => "st",
            TestKind::FixedSample => "ft",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "st" | "sequential" => Some(TestKind::Sequential),
            "ft" | "fixed" | "fixedsample" => Some(TestKind::FixedSample),
            _ => None,
        }
    }
}

/// What the budget counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum BudgetUnit {
    /// Individual noisy function evaluations; one `Y` draw costs two.
    #[default]
    OracleCalls,
    /// `Y` draws.
    YDraws,
}

impl BudgetUnit {
    fn cost_per_draw(self) -> u64 {
        match self {
            BudgetUnit::OracleCalls => 2,
            BudgetUnit::YDraws => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub delta0: f64,
    pub c: f64,
    pub theta: f64,
    pub gamma: f64,
    pub test_kind: TestKind,
    pub budget: u64,
    pub budget_unit: BudgetUnit,
    /// Per-evaluation noise variance, assumed known.
    pub sigma2_f: f64,
}

impl SearchConfig {
    /// `delta0 = 1`, `c = 0.5`, `theta = 0.95`, `gamma = 1.3`, 10^4 oracle calls.
    pub fn standard(test_kind: TestKind, sigma2_f: f64) -> Self {
        Self {
            delta0: 1.0,
            c: 0.5,
            theta: 0.95,
            gamma: 1.3,
            test_kind,
            budget: 10_000,
            budget_unit: BudgetUnit::OracleCalls,
            sigma2_f,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn sigma2_y(&self) -> f64 {
        2.0 * self.sigma2_f
    }
}

/// `C_k = c delta^2 (1 - theta^2) / (2 (gamma^2 - theta^2))`.
pub fn accuracy_level(c: f64, theta: f64, gamma: f64, delta: f64) -> f64 {
    c * delta * delta * (1.0 - theta * theta) / (2.0 * (gamma * gamma - theta * theta))
}

/// `3 log(gamma) + 11 log(theta)`; must be positive.
pub fn stepsize_drift(theta: f64, gamma: f64) -> f64 {
    3.0 * gamma.ln() + 11.0 * theta.ln()
}

pub fn validate_config(config: &SearchConfig) -> Result<(), ConfigError> {
    let SearchConfig {
        delta0,
        c,
        theta,
        gamma,
        ..
    } = *config;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(ConfigError::Theta(theta));
    }
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(ConfigError::Gamma(gamma));
    }
    if !(delta0 > 0.0) || !delta0.is_finite() {
        return Err(ConfigError::Delta0(delta0));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(ConfigError::DecreaseConstant(c));
    }
    if !(config.sigma2_f >= 0.0) || !config.sigma2_f.is_finite() {
        return Err(ConfigError::NoiseVariance(config.sigma2_f));
    }
    if config.budget == 0 {
        return Err(ConfigError::Budget);
    }
    let drift = stepsize_drift(theta, gamma);
    if !(drift > 0.0) {
        return Err(ConfigError::StepsizeDrift(drift));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: u64,
    pub delta_k: f64,
    pub x_k: Vec<f64>,
    /// The polled direction `D_k`.
    pub direction: Vec<f64>,
    /// `f(X_k)`, evaluated noiselessly for logging.
    pub true_f: f64,
    /// `f(X_k + Delta_k D_k)`, evaluated noiselessly for logging.
    pub trial_true_f: f64,
    /// `Y` draws spent by this iteration's test.
    pub samples_m: u64,
    pub accepted: bool,
    pub capped: bool,
    pub oracle_calls_cum: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    BudgetExhausted,
    /// The stepsize fell below `1e-150`.
    StepsizeUnderflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    /// `(oracle calls so far, best true f among iterates so far)`, starting
    /// at `(0, f(x0))` and extended after every iteration.
    pub best_true_f_by_calls: Vec<(u64, f64)>,
    pub terminated_reason: TerminationReason,
    pub final_x: Vec<f64>,
    pub final_delta: f64,
    pub oracle_calls: u64,
}

impl RunTrace {
    pub fn f0(&self) -> f64 {
        self.best_true_f_by_calls[0].1
    }

    pub fn best_true_f(&self) -> f64 {
        self.best_true_f_by_calls.last().map_or(f64::NAN, |p| p.1)
    }
}

const DELTA_FLOOR: f64 = 1e-150;

/// Runs the search until the next test cannot be afforded.
///
/// The sequential test uses `a_l = -b_l = sigma_Y^2 / (2 e C_k)` and a cap
/// of ten fixed-sample sizes, clamped to what the budget still pays for; a
/// test truncated by the cap falls back to the sign of its running sum. The
/// fixed-sample test uses `m = ceil(sigma_Y^2 / C_k^2)` and is only started
/// if all `m` draws fit in the budget. With `sigma2_f = 0` both tests use a
/// single draw and decide the sufficient-decrease condition exactly.
pub fn run_direct_search(
    config: &SearchConfig,
    problem: &Problem,
    stream: &mut RngStream,
) -> Result<RunTrace> {
    validate_config(config)?;
    let noise = GaussianNoiseModel::new(config.sigma2_f)?;
    let sigma2_y = noise.sigma2_y();
    let cost = config.budget_unit.cost_per_draw();

    let mut x = problem.x0().to_vec();
    let mut f_x = problem.eval(&x);
    let mut delta = config.delta0;
    let mut spent = 0u64;
    let mut calls = 0u64;
    let mut best = f_x;
    let mut records = Vec::new();
    let mut best_true_f_by_calls = vec![(0, f_x)];

    let terminated_reason = loop {
        if delta < DELTA_FLOOR {
            break TerminationReason::StepsizeUnderflow;
        }
        let affordable = (config.budget - spent) / cost;
        if affordable == 0 {
            break TerminationReason::BudgetExhausted;
        }
        let accuracy = accuracy_level(config.c, config.theta, config.gamma, delta);
        let fixed_m = if sigma2_y > 0.0 {
            ((sigma2_y / (accuracy * accuracy)).ceil() as u64).max(1)
        } else {
            1
        };
        if config.test_kind == TestKind::FixedSample && fixed_m > affordable {
            break TerminationReason::BudgetExhausted;
        }

        let direction = uniform_sphere_direction(stream, problem.n())?;
        let mut observable =
            DecreaseObservable::new(problem, noise, &x, &direction, delta, config.c)?;
        let decision = match config.test_kind {
            TestKind::Sequential => {
                let c0 = if sigma2_y > 0.0 {
                    c_accurate_boundary(sigma2_y, accuracy)?
                } else {
                    0.0
                };
                let cap = fixed_m.saturating_mul(10).min(affordable);
                let schedule = BoundarySchedule::constant_symmetric(c0, cap)?;
                sequential_decision(&mut observable, &schedule, stream)
            }
            TestKind::FixedSample => fixed_decision(&mut observable, fixed_m, stream)?,
        };
        spent += decision.samples_used * cost;
        calls += observable.calls();

        let accepted = decision.accepted == Hypothesis::H0;
        let trial_true_f = problem.eval(observable.trial());
        records.push(IterationRecord {
            k: records.len() as u64,
            delta_k: delta,
            x_k: x.clone(),
            direction: direction.into_vec(),
            true_f: f_x,
            trial_true_f,
            samples_m: decision.samples_used,
            accepted,
            capped: decision.capped,
            oracle_calls_cum: calls,
        });
        if accepted {
            x = observable.trial().to_vec();
            f_x = trial_true_f;
            delta *= config.gamma;
        } else {
            delta *= config.theta;
        }
        best = best.min(f_x);
        best_true_f_by_calls.push((calls, best));
    };

    Ok(RunTrace {
        records,
        best_true_f_by_calls,
        terminated_reason,
        final_x: x,
        final_delta: delta,
        oracle_calls: calls,
    })
}
