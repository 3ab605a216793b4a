//! Solver comparison harness: runs the sequential-test and fixed-sample
//! solvers over catalog problems, turns each run into an
//! evaluations-to-convergence count, and summarizes the counts as data and
//! performance profiles written to CSV and SVG.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{ConfigError, Error, Result};
use crate::oracle::{builtin_problem, CATALOG};
use crate::runner::par_map;
use crate::search::{run_direct_search, validate_config, BudgetUnit, SearchConfig, TestKind};
use crate::stochastics::{fnv1a, mix_seed, RngStream};

pub const RECORDS_HEADER: &str = "problem,n,solver,sigma2_f,seed,t_evals,best_true_f";
pub const HISTORIES_HEADER: &str = "problem,n,solver,sigma2_f,seed,calls,best_true_f";
pub const F_LOWER_HEADER: &str = "problem,n,f_lower";

pub const RECORDS_FILE: &str = "records.csv";
pub const HISTORIES_FILE: &str = "histories.csv";
pub const F_LOWER_FILE: &str = "f_lower.csv";

/// Budget multiplier of the calibration runs that estimate `f_L` for
/// problems without a known minimum.
pub const CALIBRATION_FACTOR: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub problems: Vec<(String, usize)>,
    pub sigma2_f_values: Vec<f64>,
    pub reps: u32,
    pub budget: u64,
    pub budget_unit: BudgetUnit,
    pub tolerance_tau: f64,
    pub solvers: Vec<TestKind>,
    pub delta0: f64,
    pub c: f64,
    pub theta: f64,
    pub gamma: f64,
}

impl Default for ExperimentConfig {
    /// Every catalog problem at n = 2, 10, 50; noise variances 0.01 and 1;
    /// 10 repetitions of 10^4 oracle calls per solver.
    fn default() -> Self {
        let problems = [2, 10, 50]
            .iter()
            .flat_map(|&n| CATALOG.iter().map(move |p| (p.to_string(), n)))
            .collect();
        Self {
            master_seed: 0,
            problems,
            sigma2_f_values: vec![0.01, 1.0],
            reps: 10,
            budget: 10_000,
            budget_unit: BudgetUnit::OracleCalls,
            tolerance_tau: 0.1,
            solvers: vec![TestKind::Sequential, TestKind::FixedSample],
            delta0: 1.0,
            c: 0.5,
            theta: 0.95,
            gamma: 1.3,
        }
    }
}

fn value_err(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse_list<T>(key: &str, v: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).ok_or_else(|| value_err(key, format!("cannot parse `{s}`"))))
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| value_err(key, format!("cannot parse `{v}`")))
}

/// `name:n` entries; `*:n` expands to the whole catalog at dimension `n`.
fn parse_problems(v: &str) -> Result<Vec<(String, usize)>, ConfigError> {
    let mut out = Vec::new();
    for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, n) = item
            .split_once(':')
            .ok_or_else(|| value_err("problems", format!("`{item}` is not name:n")))?;
        let n: usize = parse_scalar("problems", n.trim())?;
        match name.trim() {
            "*" => out.extend(CATALOG.iter().map(|p| (p.to_string(), n))),
            name => out.push((name.to_string(), n)),
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Parses flat `key = value` lines. `#` starts a comment; blank lines are
    /// ignored; keys not given keep their [`Default`] values.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                reason: format!("expected `key = value`, got `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(first) = seen.insert(key.to_string(), line) {
                return Err(ConfigError::Syntax {
                    line,
                    reason: format!("duplicate key `{key}` (first set on line {first})"),
                });
            }
            match key {
                "master_seed" => cfg.master_seed = parse_scalar(key, value)?,
                "problems" => cfg.problems = parse_problems(value)?,
                "sigma2_f_values" => cfg.sigma2_f_values = parse_list(key, value, |s| s.parse().ok())?,
                "reps" => cfg.reps = parse_scalar(key, value)?,
                "budget" => cfg.budget = parse_scalar(key, value)?,
                "budget_unit" => {
                    cfg.budget_unit = match value {
                        "oracle_calls" => BudgetUnit::OracleCalls,
                        "y_draws" => BudgetUnit::YDraws,
                        _ => return Err(value_err(key, "expected `oracle_calls` or `y_draws`")),
                    }
                }
                "tolerance_tau" => cfg.tolerance_tau = parse_scalar(key, value)?,
                "solvers" => cfg.solvers = parse_list(key, value, TestKind::from_label)?,
                "delta0" => cfg.delta0 = parse_scalar(key, value)?,
                "c" => cfg.c = parse_scalar(key, value)?,
                "theta" => cfg.theta = parse_scalar(key, value)?,
                "gamma" => cfg.gamma = parse_scalar(key, value)?,
                _ => return Err(value_err(key, "unknown key")),
            }
        }
        cfg.validate_fields()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::parse(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate_fields(&self) -> Result<(), ConfigError> {
        if self.problems.is_empty() {
            return Err(value_err("problems", "list is empty"));
        }
        if self.sigma2_f_values.is_empty() {
            return Err(value_err("sigma2_f_values", "list is empty"));
        }
        if self.solvers.is_empty() {
            return Err(value_err("solvers", "list is empty"));
        }
        let mut solvers = self.solvers.clone();
        solvers.sort();
        solvers.dedup();
        if solvers.len() != self.solvers.len() {
            return Err(value_err("solvers", "duplicate solver"));
        }
        if self.reps == 0 {
            return Err(value_err("reps", "must be >= 1"));
        }
        if !(self.tolerance_tau > 0.0 && self.tolerance_tau < 1.0) {
            return Err(value_err("tolerance_tau", "must lie in (0, 1)"));
        }
        for &s in &self.sigma2_f_values {
            for &kind in &self.solvers {
                validate_config(&self.search_config(kind, s))?;
            }
        }
        Ok(())
    }

    /// Field checks plus catalog lookup of every problem.
    pub fn validate(&self) -> Result<()> {
        self.validate_fields()?;
        for (name, n) in &self.problems {
            builtin_problem(name, *n)?;
        }
        Ok(())
    }

    pub fn search_config(&self, kind: TestKind, sigma2_f: f64) -> SearchConfig {
        SearchConfig {
            delta0: self.delta0,
            c: self.c,
            theta: self.theta,
            gamma: self.gamma,
            test_kind: kind,
            budget: self.budget,
            budget_unit: self.budget_unit,
            sigma2_f,
        }
    }

    /// The configuration in the format read by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(
            s,
            "problems = {}",
            join(self.problems.iter().map(|(p, n)| format!("{p}:{n}")).collect())
        );
        let _ = writeln!(
            s,
            "sigma2_f_values = {}",
            join(self.sigma2_f_values.iter().map(f64::to_string).collect())
        );
        let _ = writeln!(s, "reps = {}", self.reps);
        let _ = writeln!(s, "budget = {}", self.budget);
        let unit = match self.budget_unit {
            BudgetUnit::OracleCalls => "oracle_calls",
            BudgetUnit::YDraws => "y_draws",
        };
        let _ = writeln!(s, "budget_unit = {unit}");
        let _ = writeln!(s, "tolerance_tau = {}", self.tolerance_tau);
        let _ = writeln!(
            s,
            "solvers = {}",
            join(self.solvers.iter().map(|k| k.label().to_string()).collect())
        );
        let _ = writeln!(s, "delta0 = {}", self.delta0);
        let _ = writeln!(s, "c = {}", self.c);
        let _ = writeln!(s, "theta = {}", self.theta);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord {
    pub problem: String,
    pub n: usize,
    pub solver: TestKind,
    pub sigma2_f: f64,
    pub seed: u64,
    /// Oracle calls until the convergence test passed; `None` if it never did.
    pub t_evals: Option<u64>,
    pub best_true_f: f64,
}

/// Best true objective value against oracle calls, kept only where it
/// improves. The first point is `(0, f(x0))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub problem: String,
    pub n: usize,
    pub solver: TestKind,
    pub sigma2_f: f64,
    pub seed: u64,
    pub points: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurve {
    pub alphas: Vec<f64>,
    pub fractions: Vec<f64>,
}

/// Smallest logged oracle-call count at which the best true value is at most
/// `f_L + tau (f0 - f_L)`; `None` if that never happens.
pub fn evals_to_convergence(points: &[(u64, f64)], f0: f64, f_lower: f64, tau: f64) -> Result<Option<u64>> {
    if !(f0 > f_lower) {
        return Err(Error::param("f0", format!("must exceed f_L ({f0} <= {f_lower})")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::param("tau", format!("must lie in (0, 1), got {tau}")));
    }
    let threshold = f_lower + tau * (f0 - f_lower);
    Ok(points.iter().find(|(_, f)| *f <= threshold).map(|(calls, _)| *calls))
}

fn solvers_in(records: &[SolveRecord]) -> Vec<TestKind> {
    let mut s: Vec<TestKind> = records.iter().map(|r| r.solver).collect();
    s.sort();
    s.dedup();
    s
}

/// `d_s(alpha)`: the fraction of a solver's runs with `t_evals <= alpha (n + 1)`.
pub fn data_profile(records: &[SolveRecord], alphas: &[f64]) -> Result<Vec<(TestKind, ProfileCurve)>> {
    if records.is_empty() {
        return Err(Error::param("records", "no records"));
    }
    Ok(solvers_in(records)
        .into_iter()
        .map(|solver| {
            let mine: Vec<&SolveRecord> = records.iter().filter(|r| r.solver == solver).collect();
            let fractions = alphas
                .iter()
                .map(|&alpha| {
                    let hits = mine
                        .iter()
                        .filter(|r| r.t_evals.is_some_and(|t| t as f64 <= alpha * (r.n + 1) as f64))
                        .count();
                    hits as f64 / mine.len() as f64
                })
                .collect();
            (
                solver,
                ProfileCurve {
                    alphas: alphas.to_vec(),
                    fractions,
                },
            )
        })
        .collect())
}

/// Groups records into instances: the `i`-th record of each solver on a
/// `(problem, n, sigma2_f)` triple belongs to instance `i`. Runs of
/// different solvers use different seeds, so pairing is by repetition.
fn instances(records: &[SolveRecord]) -> Result<Vec<BTreeMap<TestKind, Option<u64>>>> {
    let mut counters: HashMap<(String, usize, u64, TestKind), usize> = HashMap::new();
    let mut index: BTreeMap<(String, usize, u64, usize), BTreeMap<TestKind, Option<u64>>> = BTreeMap::new();
    for r in records {
        let c = counters
            .entry((r.problem.clone(), r.n, r.sigma2_f.to_bits(), r.solver))
            .or_default();
        index
            .entry((r.problem.clone(), r.n, r.sigma2_f.to_bits(), *c))
            .or_default()
            .insert(r.solver, r.t_evals);
        *c += 1;
    }
    let solvers = solvers_in(records);
    index
        .into_iter()
        .map(|((p, n, _, i), m)| {
            if m.len() == solvers.len() {
                Ok(m)
            } else {
                Err(Error::param(
                    "records",
                    format!("repetition {i} of {p} (n = {n}) lacks a run of some solver"),
                ))
            }
        })
        .collect()
}

/// `rho_s(alpha)`: the fraction of instances where the solver's cost is
/// within a factor `alpha` of the best solver's. Unsolved runs have ratio
/// infinity.
pub fn performance_profile(records: &[SolveRecord], alphas: &[f64]) -> Result<Vec<(TestKind, ProfileCurve)>> {
    let solvers = solvers_in(records);
    if solvers.len() < 2 {
        return Err(Error::param("records", "performance profiles need at least two solvers"));
    }
    let ratios = performance_ratios(records)?;
    Ok(solvers
        .into_iter()
        .map(|solver| {
            let rs: Vec<f64> = ratios.iter().map(|m| m[&solver]).collect();
            let fractions = alphas
                .iter()
                .map(|&a| rs.iter().filter(|&&r| r <= a).count() as f64 / rs.len() as f64)
                .collect();
            (
                solver,
                ProfileCurve {
                    alphas: alphas.to_vec(),
                    fractions,
                },
            )
        })
        .collect())
}

fn performance_ratios(records: &[SolveRecord]) -> Result<Vec<BTreeMap<TestKind, f64>>> {
    Ok(instances(records)?
        .into_iter()
        .map(|m| {
            let best = m.values().filter_map(|t| *t).min();
            m.into_iter()
                .map(|(s, t)| {
                    let r = match (t, best) {
                        (Some(t), Some(b)) if b > 0 => t as f64 / b as f64,
                        (Some(t), Some(_)) if t == 0 => 1.0,
                        _ => f64::INFINITY,
                    };
                    (s, r)
                })
                .collect()
        })
        .collect())
}

/// `points` values evenly spaced on `[0, max]`.
pub fn linear_grid(max: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points).map(|i| max * i as f64 / (points - 1) as f64).collect()
}

/// `points` values log-spaced on `[1, max]`.
pub fn log_grid(max: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    let lmax = max.max(1.0).ln();
    (0..points)
        .map(|i| if i == 0 { 1.0 } else { (lmax * i as f64 / (points - 1) as f64).exp() })
        .collect()
}

pub const PROFILE_POINTS: usize = 201;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub records: Vec<SolveRecord>,
    pub histories: Vec<RunHistory>,
    /// `(problem, n, f_L)` in configuration order.
    pub f_lower: Vec<(String, usize, f64)>,
}

fn run_seed(master: u64, problem: &str, n: usize, solver: TestKind, sigma2_f: f64, rep: u32, tag: &str) -> u64 {
    let key = format!("{tag}/{problem}/{n}/{}/{:016x}/{rep}", solver.label(), sigma2_f.to_bits());
    mix_seed(master, fnv1a(key.as_bytes()))
}

struct Job {
    problem: String,
    n: usize,
    solver: TestKind,
    sigma2_f: f64,
    rep: u32,
    budget: u64,
    tag: &'static str,
}

fn improvements(points: &[(u64, f64)]) -> Vec<(u64, f64)> {
    let mut out: Vec<(u64, f64)> = Vec::new();
    for &(c, f) in points {
        if out.last().map_or(true, |&(_, best)| f < best) {
            out.push((c, f));
        }
    }
    out
}

fn run_job(config: &ExperimentConfig, job: &Job) -> Result<RunHistory> {
    let problem = builtin_problem(&job.problem, job.n)?;
    let seed = run_seed(config.master_seed, &job.problem, job.n, job.solver, job.sigma2_f, job.rep, job.tag);
    let search = config.search_config(job.solver, job.sigma2_f).with_budget(job.budget);
    let trace = run_direct_search(&search, &problem, &mut RngStream::new(seed))?;
    Ok(RunHistory {
        problem: job.problem.clone(),
        n: job.n,
        solver: job.solver,
        sigma2_f: job.sigma2_f,
        seed,
        points: improvements(&trace.best_true_f_by_calls),
    })
}

fn jobs(config: &ExperimentConfig, problems: &[(String, usize)], budget: u64, tag: &'static str) -> Vec<Job> {
    let mut out = Vec::new();
    for (p, n) in problems {
        for &s in &config.sigma2_f_values {
            for &solver in &config.solvers {
                for rep in 0..config.reps {
                    out.push(Job {
                        problem: p.clone(),
                        n: *n,
                        solver,
                        sigma2_f: s,
                        rep,
                        budget,
                        tag,
                    });
                }
            }
        }
    }
    out
}

/// Runs every `(problem, sigma2_f, solver, rep)` combination. Records come
/// back in that nesting order whatever the worker count.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<ExperimentOutcome> {
    config.validate()?;
    let main_jobs = jobs(config, &config.problems, config.budget, "run");
    let histories = par_map(main_jobs, workers, |j| run_job(config, &j))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut unknown: Vec<(String, usize)> = Vec::new();
    for (p, n) in &config.problems {
        if builtin_problem(p, *n)?.f_star().is_none() && !unknown.contains(&(p.clone(), *n)) {
            unknown.push((p.clone(), *n));
        }
    }
    let calibration_budget = config.budget.saturating_mul(CALIBRATION_FACTOR);
    let calibration = par_map(
        jobs(config, &unknown, calibration_budget, "calibration"),
        workers,
        |j| run_job(config, &j),
    )
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut f_lower: Vec<(String, usize, f64)> = Vec::new();
    for (p, n) in &config.problems {
        if f_lower.iter().any(|(q, m, _)| q == p && m == n) {
            continue;
        }
        let value = match builtin_problem(p, *n)?.f_star() {
            Some(f) => f,
            None => histories
                .iter()
                .chain(&calibration)
                .filter(|h| &h.problem == p && h.n == *n)
                .filter_map(|h| h.points.last().map(|x| x.1))
                .fold(f64::INFINITY, f64::min),
        };
        f_lower.push((p.clone(), *n, value));
    }

    let records = to_records(&histories, &f_lower, config.tolerance_tau)?;
    Ok(ExperimentOutcome {
        records,
        histories,
        f_lower,
    })
}

/// Converts run histories into records at tolerance `tau`.
pub fn to_records(histories: &[RunHistory], f_lower: &[(String, usize, f64)], tau: f64) -> Result<Vec<SolveRecord>> {
    histories
        .iter()
        .map(|h| {
            let fl = f_lower
                .iter()
                .find(|(p, n, _)| *p == h.problem && *n == h.n)
                .map(|x| x.2)
                .ok_or_else(|| Error::param("f_lower", format!("no value for {} (n = {})", h.problem, h.n)))?;
            let f0 = h.points.first().map_or(f64::NAN, |p| p.1);
            if !(f0 > fl) {
                return Err(Error::Assumption(format!(
                    "{} (n = {}): f(x0) = {f0} is not above f_L = {fl}",
                    h.problem, h.n
                )));
            }
            Ok(SolveRecord {
                problem: h.problem.clone(),
                n: h.n,
                solver: h.solver,
                sigma2_f: h.sigma2_f,
                seed: h.seed,
                t_evals: evals_to_convergence(&h.points, f0, fl, tau)?,
                best_true_f: h.points.last().map_or(f64::NAN, |p| p.1),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV

pub fn records_csv(records: &[SolveRecord]) -> String {
    let mut s = format!("{RECORDS_HEADER}\n");
    for r in records {
        let t = r.t_evals.map_or(String::new(), |t| t.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.problem,
            r.n,
            r.solver.label(),
            r.sigma2_f,
            r.seed,
            t,
            r.best_true_f
        );
    }
    s
}

pub fn histories_csv(histories: &[RunHistory]) -> String {
    let mut s = format!("{HISTORIES_HEADER}\n");
    for h in histories {
        for (calls, f) in &h.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                h.problem,
                h.n,
                h.solver.label(),
                h.sigma2_f,
                h.seed,
                calls,
                f
            );
        }
    }
    s
}

pub fn f_lower_csv(f_lower: &[(String, usize, f64)]) -> String {
    let mut s = format!("{F_LOWER_HEADER}\n");
    for (p, n, f) in f_lower {
        let _ = writeln!(s, "{p},{n},{f}");
    }
    s
}

/// Splits a CSV body after checking its header; yields `(line number, fields)`.
fn csv_rows<'a>(path: &Path, text: &'a str, header: &str, width: usize) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == header => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                reason: format!("expected header `{header}`"),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let fields: Vec<&str> = l.trim_end().split(',').collect();
            if fields.len() == width {
                Ok((i + 1, fields))
            } else {
                Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("expected {width} fields, got {}", fields.len()),
                })
            }
        })
        .collect()
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: format!("bad {name} `{v}`"),
    })
}

fn solver_field(path: &Path, line: usize, v: &str) -> Result<TestKind> {
    TestKind::from_label(v.trim()).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: format!("unknown solver `{v}`"),
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_records(path: &Path, text: &str) -> Result<Vec<SolveRecord>> {
    csv_rows(path, text, RECORDS_HEADER, 7)?
        .into_iter()
        .map(|(line, f)| {
            Ok(SolveRecord {
                problem: f[0].trim().to_string(),
                n: field(path, line, "n", f[1])?,
                solver: solver_field(path, line, f[2])?,
                sigma2_f: field(path, line, "sigma2_f", f[3])?,
                seed: field(path, line, "seed", f[4])?,
                t_evals: if f[5].trim().is_empty() {
                    None
                } else {
                    Some(field(path, line, "t_evals", f[5])?)
                },
                best_true_f: field(path, line, "best_true_f", f[6])?,
            })
        })
        .collect()
}

pub fn read_records(path: &Path) -> Result<Vec<SolveRecord>> {
    parse_records(path, &read_text(path)?)
}

pub fn read_histories(path: &Path) -> Result<Vec<RunHistory>> {
    let text = read_text(path)?;
    let mut out: Vec<RunHistory> = Vec::new();
    for (line, f) in csv_rows(path, &text, HISTORIES_HEADER, 7)? {
        let problem = f[0].trim();
        let n: usize = field(path, line, "n", f[1])?;
        let solver = solver_field(path, line, f[2])?;
        let sigma2_f: f64 = field(path, line, "sigma2_f", f[3])?;
        let seed: u64 = field(path, line, "seed", f[4])?;
        let point = (field(path, line, "calls", f[5])?, field(path, line, "best_true_f", f[6])?);
        match out.last_mut() {
            Some(h)
                if h.problem == problem
                    && h.n == n
                    && h.solver == solver
                    && h.sigma2_f.to_bits() == sigma2_f.to_bits()
                    && h.seed == seed =>
            {
                h.points.push(point)
            }
            _ => out.push(RunHistory {
                problem: problem.to_string(),
                n,
                solver,
                sigma2_f,
                seed,
                points: vec![point],
            }),
        }
    }
    Ok(out)
}

pub fn read_f_lower(path: &Path) -> Result<Vec<(String, usize, f64)>> {
    let text = read_text(path)?;
    csv_rows(path, &text, F_LOWER_HEADER, 3)?
        .into_iter()
        .map(|(line, f)| Ok((f[0].trim().to_string(), field(path, line, "n", f[1])?, field(path, line, "f_lower", f[2])?)))
        .collect()
}

/// Recomputes `t_evals` at a new tolerance, matching each record to its
/// history by `(problem, n, solver, sigma2_f, seed)`.
pub fn retarget_tolerance(
    records: &[SolveRecord],
    histories: &[RunHistory],
    f_lower: &[(String, usize, f64)],
    tau: f64,
) -> Result<Vec<SolveRecord>> {
    let fresh = to_records(histories, f_lower, tau)?;
    records
        .iter()
        .map(|r| {
            fresh
                .iter()
                .find(|h| {
                    h.problem == r.problem
                        && h.n == r.n
                        && h.solver == r.solver
                        && h.sigma2_f.to_bits() == r.sigma2_f.to_bits()
                        && h.seed == r.seed
                })
                .cloned()
                .ok_or_else(|| Error::param("histories", format!("no history for {} seed {}", r.problem, r.seed)))
        })
        .collect()
}

fn profile_csv(curves: &[(TestKind, ProfileCurve)]) -> String {
    let mut s = String::from("solver,alpha,fraction\n");
    for (solver, c) in curves {
        for (a, f) in c.alphas.iter().zip(&c.fractions) {
            let _ = writeln!(s, "{},{},{}", solver.label(), a, f);
        }
    }
    s
}

// ---------------------------------------------------------------------------
// SVG

fn solver_color(s: TestKind) -> &'static str {
    match s {
        TestKind::Sequential => "#1f5fa8",
        TestKind::FixedSample => "#c0392b",
    }
}

fn solver_name(s: TestKind) -> &'static str {
    match s {
        TestKind::Sequential => "sequential test",
        TestKind::FixedSample => "fixed sample",
    }
}

/// Step-line plot of profile curves with axes and a legend.
pub fn profile_svg(title: &str, x_label: &str, curves: &[(TestKind, ProfileCurve)], log_x: bool) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 64.0;
    const R: f64 = 24.0;
    const T: f64 = 40.0;
    const B: f64 = 56.0;
    let tx = |a: f64| if log_x { a.max(1.0).ln() } else { a };
    let (xmin, xmax) = curves
        .iter()
        .flat_map(|(_, c)| c.alphas.iter().map(|&a| tx(a)))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a), hi.max(a)));
    let (xmin, xmax) = if xmin.is_finite() && xmax > xmin { (xmin, xmax) } else { (0.0, 1.0) };
    let px = |a: f64| L + (tx(a) - xmin) / (xmax - xmin) * (W - L - R);
    let py = |f: f64| H - B - f * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, xml_escape(title));
    // axes and y ticks
    let _ = writeln!(
        s,
        r#"<path d="M{L} {T} V{} H{}" fill="none" stroke="black"/>"#,
        H - B,
        W - R
    );
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let y = py(f);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{y:.1}" x2="{L}" y2="{y:.1}" stroke="black"/><line x1="{L}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{f:.1}</text>"##,
            L - 4.0,
            W - R,
            L - 8.0,
            y + 4.0
        );
    }
    for i in 0..=4 {
        let v = xmin + (xmax - xmin) * i as f64 / 4.0;
        let a = if log_x { v.exp() } else { v };
        let x = L + (v - xmin) / (xmax - xmin) * (W - L - R);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="black"/><text x="{x:.1}" y="{}" text-anchor="middle">{}</text>"#,
            H - B,
            H - B + 4.0,
            H - B + 18.0,
            tick_label(a)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (L + W - R) / 2.0,
        H - 16.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">fraction of runs</text>"#,
        (T + H - B) / 2.0,
        (T + H - B) / 2.0
    );
    for (i, (solver, c)) in curves.iter().enumerate() {
        let mut d = String::new();
        for (j, (a, f)) in c.alphas.iter().zip(&c.fractions).enumerate() {
            if j == 0 {
                let _ = write!(d, "M{:.2} {:.2}", px(*a), py(*f));
            } else {
                let _ = write!(d, " H{:.2} V{:.2}", px(*a), py(*f));
            }
        }
        let color = solver_color(*solver);
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>"#);
        let ly = T + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            W - R - 150.0,
            W - R - 124.0,
            W - R - 118.0,
            ly + 4.0,
            solver_name(*solver)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick_label(a: f64) -> String {
    if a >= 100.0 || a == a.round() {
        format!("{a:.0}")
    } else {
        format!("{a:.2}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes data and performance profiles (CSV and SVG) for each noise level
/// in the records. The data-profile grid runs to `max_alpha`, or to the
/// largest observed `t / (n + 1)` when `None`. Returns the written paths.
pub fn write_profiles(records: &[SolveRecord], tau: f64, max_alpha: Option<f64>, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut sigmas: Vec<f64> = records.iter().map(|r| r.sigma2_f).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup_by(|a, b| a.to_bits() == b.to_bits());
    let mut written = Vec::new();
    let mut write = |name: String, body: String| -> Result<()> {
        let path = out.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for s in sigmas {
        let subset: Vec<SolveRecord> = records.iter().filter(|r| r.sigma2_f.to_bits() == s.to_bits()).cloned().collect();
        let observed = subset
            .iter()
            .filter_map(|r| r.t_evals.map(|t| t as f64 / (r.n + 1) as f64))
            .fold(1.0f64, f64::max);
        let alphas = linear_grid(max_alpha.unwrap_or(observed), PROFILE_POINTS);
        let dp = data_profile(&subset, &alphas)?;
        let title = format!("Data profile, sigma2_f = {s}, tau = {tau}");
        write(format!("data_profile_sigma2_{s}.csv"), profile_csv(&dp))?;
        write(format!("data_profile_sigma2_{s}.svg"), profile_svg(&title, "budget in simplex gradients, alpha", &dp, false))?;
        if solvers_in(&subset).len() >= 2 {
            let rmax = performance_ratios(&subset)?
                .iter()
                .flat_map(|m| m.values().copied())
                .filter(|r| r.is_finite())
                .fold(2.0f64, f64::max);
            let pp = performance_profile(&subset, &log_grid(rmax, PROFILE_POINTS))?;
            let title = format!("Performance profile, sigma2_f = {s}, tau = {tau}");
            write(format!("performance_profile_sigma2_{s}.csv"), profile_csv(&pp))?;
            write(format!("performance_profile_sigma2_{s}.svg"), profile_svg(&title, "performance ratio, alpha", &pp, true))?;
        }
    }
    Ok(written)
}

/// Writes records, histories, `f_L` values, the effective configuration
/// and all profiles into `out`.
pub fn write_outputs(config: &ExperimentConfig, outcome: &ExperimentOutcome, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    for (name, body) in [
        (RECORDS_FILE, records_csv(&outcome.records)),
        (HISTORIES_FILE, histories_csv(&outcome.histories)),
        (F_LOWER_FILE, f_lower_csv(&outcome.f_lower)),
        ("config.txt", config.to_text()),
    ] {
        let path = out.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let min_n = config.problems.iter().map(|p| p.1).min().unwrap_or(1);
    let max_alpha = config.budget as f64 / (min_n + 1) as f64;
    written.extend(write_profiles(&outcome.records, config.tolerance_tau, Some(max_alpha), out)?);
    Ok(written)
}

/// Median `t_evals` with unsolved runs counted as infinite.
pub fn median_t_evals(records: &[&SolveRecord]) -> f64 {
    let mut t: Vec<f64> = records
        .iter()
        .map(|r| r.t_evals.map_or(f64::INFINITY, |t| t as f64))
        .collect();
    if t.is_empty() {
        return f64::NAN;
    }
    t.sort_by(f64::total_cmp);
    let m = t.len() / 2;
    if t.len() % 2 == 1 {
        t[m]
    } else if t[m - 1] == t[m] {
        t[m]
    } else {
        (t[m - 1] + t[m]) / 2.0
    }
}
