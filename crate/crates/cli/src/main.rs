use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use seqdfo::bench::{self, ExperimentConfig, SolveRecord};
use seqdfo::runner::worker_count;
use seqdfo::search::TerminationReason;
use seqdfo::verify::{self, Suite};
use seqdfo::{builtin_problem, run_direct_search, RngStream, SearchConfig, TestKind};

/// Sequential-test direct search: experiments, profiles and verification.
#[derive(Parser, Debug)]
#[command(name = "seqdfo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a solver comparison experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute data and performance profiles from a records CSV.
    Profiles {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run Monte Carlo checks of the theory and report one line per claim.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write verify_report.txt and verify_report.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one search and print its per-iteration table.
    Trace {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        solver: String,
        #[arg(long)]
        sigma2: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        budget: u64,
    },
}

/// Exit code 1: bad arguments, config or input values.
const EXIT_CONFIG: u8 = 1;
/// Exit code 2: failure while running (I/O, malformed data files, ...).
const EXIT_RUNTIME: u8 = 2;
/// Exit code 3: the verification suite ran but some claim failed.
const EXIT_VERIFY: u8 = 3;

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Verify,
}

trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Verify) => ExitCode::from(EXIT_VERIFY),
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, out } => cmd_run(&config, &out),
        Command::Profiles { records, tau, out } => cmd_profiles(&records, tau, &out),
        Command::Verify {
            suite,
            trials,
            seed,
            out,
        } => cmd_verify(&suite, trials, seed, out.as_deref()),
        Command::Trace {
            problem,
            n,
            solver,
            sigma2,
            seed,
            budget,
        } => cmd_trace(&problem, n, &solver, sigma2, seed, budget),
    }
}

fn cmd_run(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = ExperimentConfig::from_file(config)
        .with_context(|| format!("loading {}", config.display()))
        .config()?;
    let workers = worker_count();
    eprintln!(
        "running {} problems x {} noise levels x {} solvers x {} reps, workers: {workers}",
        cfg.problems.len(),
        cfg.sigma2_f_values.len(),
        cfg.solvers.len(),
        cfg.reps
    );
    let outcome = bench::run_experiment(&cfg, workers).runtime()?;
    let written = bench::write_outputs(&cfg, &outcome, out).runtime()?;
    let solved = outcome.records.iter().filter(|r| r.t_evals.is_some()).count();
    println!("{solved} of {} runs solved at tau = {}", outcome.records.len(), cfg.tolerance_tau);
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_profiles(records_path: &Path, tau: f64, out: &Path) -> Result<(), Failure> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Failure::Config(anyhow!("--tau must lie in (0, 1), got {tau}")));
    }
    let mut records: Vec<SolveRecord> = bench::read_records(records_path).runtime()?;
    if records.is_empty() {
        return Err(Failure::Config(anyhow!("{} has no records", records_path.display())));
    }
    let dir = records_path.parent().unwrap_or(Path::new("."));
    let histories = dir.join(bench::HISTORIES_FILE);
    let f_lower = dir.join(bench::F_LOWER_FILE);
    if histories.exists() && f_lower.exists() {
        let h = bench::read_histories(&histories).runtime()?;
        let fl = bench::read_f_lower(&f_lower).runtime()?;
        records = bench::retarget_tolerance(&records, &h, &fl, tau).runtime()?;
        eprintln!("recomputed t_evals at tau = {tau} from {}", histories.display());
    } else {
        eprintln!(
            "note: no {} / {} next to the records; using their t_evals as recorded",
            bench::HISTORIES_FILE,
            bench::F_LOWER_FILE
        );
    }
    for path in bench::write_profiles(&records, tau, None, out).runtime()? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_verify(suite: &str, trials: u64, seed: u64, out: Option<&Path>) -> Result<(), Failure> {
    let suite = Suite::from_name(suite)
        .ok_or_else(|| anyhow!("unknown suite `{suite}` (all, testing, renewal, inequalities)"))
        .config()?;
    if trials < verify::McEstimate::MIN_TRIALS {
        return Err(Failure::Config(anyhow!(
            "--trials must be at least {}",
            verify::McEstimate::MIN_TRIALS
        )));
    }
    let report = verify::run_suite(suite, trials, seed, worker_count()).runtime()?;
    print!("{}", report.to_text());
    if let Some(dir) = out {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .runtime()?;
        for (name, body) in [
            ("verify_report.txt", report.to_text()),
            ("verify_report.csv", report.to_csv()),
        ] {
            let path = dir.join(name);
            fs::write(&path, body)
                .with_context(|| format!("writing {}", path.display()))
                .runtime()?;
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

fn cmd_trace(problem: &str, n: usize, solver: &str, sigma2: f64, seed: u64, budget: u64) -> Result<(), Failure> {
    let kind = TestKind::from_label(solver)
        .ok_or_else(|| anyhow!("unknown solver `{solver}` (st or ft)"))
        .config()?;
    let problem = builtin_problem(problem, n).config()?;
    let cfg = SearchConfig::standard(kind, sigma2).with_budget(budget);
    seqdfo::search::validate_config(&cfg).config()?;
    let trace = run_direct_search(&cfg, &problem, &mut RngStream::new(seed)).runtime()?;

    println!(
        "{:>6} {:>12} {:>14} {:>14} {:>8} {:>6} {:>6} {:>10}",
        "k", "delta", "f(x)", "f(trial)", "m", "step", "capped", "calls"
    );
    for r in &trace.records {
        println!(
            "{:>6} {:>12.4e} {:>14.6e} {:>14.6e} {:>8} {:>6} {:>6} {:>10}",
            r.k,
            r.delta_k,
            r.true_f,
            r.trial_true_f,
            r.samples_m,
            if r.accepted { "yes" } else { "no" },
            if r.capped { "yes" } else { "no" },
            r.oracle_calls_cum
        );
    }
    let reason = match trace.terminated_reason {
        TerminationReason::BudgetExhausted => "budget exhausted",
        TerminationReason::StepsizeUnderflow => "stepsize underflow",
    };
    println!(
        "{} iterations, {} oracle calls, best f = {:.6e}, stopped: {reason}",
        trace.records.len(),
        trace.oracle_calls,
        trace.best_true_f()
    );
    if trace.records.is_empty() && budget > 0 && sigma2 > 0.0 && kind == TestKind::FixedSample {
        eprintln!("note: the first fixed-sample test did not fit in the budget");
    }
    Ok(())
}
