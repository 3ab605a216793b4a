//! Sequential hypothesis testing for step acceptance in stochastic
//! derivative-free optimization.
//!
//! A direct-search step is accepted when the sufficient-decrease condition
//! `f(x) - f(x + delta d) >= c delta^2` holds. Under noise, the sign of
//! `E[Y]` with `Y = c delta^2 - (F(x) - F(x + delta d))` is tested either
//! sequentially (stop as soon as the running sum leaves a band) or with a
//! fixed sample size.
//!
//! Modules:
//! - [`stochastics`]: seeded streams, Gaussian and unit-sphere sampling.
//! - [`testing`]: the sequential and fixed-sample tests and their sample-size formulas.
//! - [`oracle`]: test problems, the noisy oracle and the decrease observable.
//! - [`search`]: probabilistic-descent direct search.
//! - [`verify`]: Monte Carlo and closed-form checks of the theory.
//! - [`bench`]: the solver comparison harness with data and performance profiles.

pub mod bench;
pub mod error;
pub mod oracle;
pub mod runner;
pub mod search;
pub mod stochastics;
pub mod testing;
pub mod verify;

pub use error::{ConfigError, Error, Result};
pub use oracle::{builtin_problem, GaussianNoiseModel, Problem};
pub use search::{run_direct_search, RunTrace, SearchConfig, TestKind};
pub use stochastics::RngStream;
