//! Test problems, the additive Gaussian noise oracle, and the decrease
//! observable `Y = c delta^2 - (F(x) - F(x + delta d))`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::stochastics::{gaussian, Direction, RngStream};
use crate::testing::YSampler;

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Names accepted by [`builtin_problem`].
pub const CATALOG: [&str; 8] = [
    "sphere",
    "quad_illcond",
    "rosenbrock_ext",
    "arwhead",
    "dqrtic",
    "tridia",
    "engval1",
    "cosine_chain",
];

#[derive(Clone)]
enum Objective {
    Sphere,
    QuadIllcond,
    RosenbrockExt,
    Arwhead,
    Dqrtic,
    Tridia,
    Engval1,
    CosineChain,
    Custom { eval: EvalFn, grad: Option<GradFn> },
}

/// A smooth objective with a standard start point.
#[derive(Clone)]
pub struct Problem {
    name: String,
    n: usize,
    x0: Vec<f64>,
    f_star: Option<f64>,
    objective: Objective,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("f_star", &self.f_star)
            .finish_non_exhaustive()
    }
}

impl Problem {
    /// Wraps a user objective. `x0` fixes the dimension.
    pub fn custom(
        name: impl Into<String>,
        x0: Vec<f64>,
        f_star: Option<f64>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: Option<GradFn>,
    ) -> Result<Self> {
        if x0.is_empty() {
            return Err(Error::param("x0", "dimension must be >= 1"));
        }
        Ok(Self {
            name: name.into(),
            n: x0.len(),
            x0,
            f_star,
            objective: Objective::Custom {
                eval: Arc::new(eval),
                grad,
            },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn f_star(&self) -> Option<f64> {
        self.f_star
    }

    pub fn has_gradient(&self) -> bool {
        !matches!(self.objective, Objective::Custom { grad: None, .. })
    }

    /// True objective value. Panics if `x.len() != n`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n, "dimension mismatch in {}", self.name);
        match &self.objective {
            Objective::Sphere => x.iter().map(|v| v * v).sum(),
            Objective::QuadIllcond => x
                .iter()
                .enumerate()
                .map(|(i, v)| (i + 1) as f64 * v * v)
                .sum(),
            Objective::RosenbrockExt => x
                .windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum(),
            Objective::Arwhead => {
                let last = x[self.n - 1] * x[self.n - 1];
                x[..self.n - 1]
                    .iter()
                    .map(|v| (v * v + last).powi(2) - 4.0 * v + 3.0)
                    .sum()
            }
            Objective::Dqrtic => x
                .iter()
                .enumerate()
                .map(|(i, v)| (v - (i + 1) as f64).powi(4))
                .sum(),
            Objective::Tridia => {
                (x[0] - 1.0).powi(2)
                    + x.windows(2)
                        .enumerate()
                        .map(|(i, w)| (i + 2) as f64 * (2.0 * w[1] - w[0]).powi(2))
                        .sum::<f64>()
            }
            Objective::Engval1 => x
                .windows(2)
                .map(|w| (w[0] * w[0] + w[1] * w[1]).powi(2) - 4.0 * w[0] + 3.0)
                .sum(),
            Objective::CosineChain => x
                .windows(2)
                .map(|w| (-0.5 * w[1] + w[0] * w[0]).cos())
                .sum(),
            Objective::Custom { eval, .. } => eval(x),
        }
    }

    /// Analytic gradient, for verification only. `None` for custom problems
    /// built without one.
    pub fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        assert_eq!(x.len(), self.n, "dimension mismatch in {}", self.name);
        let n = self.n;
        let mut g = vec![0.0; n];
        match &self.objective {
            Objective::Sphere => g.iter_mut().zip(x).for_each(|(g, v)| *g = 2.0 * v),
            Objective::QuadIllcond => {
                for (i, (g, v)) in g.iter_mut().zip(x).enumerate() {
                    *g = 2.0 * (i + 1) as f64 * v;
                }
            }
            Objective::RosenbrockExt => {
                for i in 0..n - 1 {
                    let t = x[i + 1] - x[i] * x[i];
                    g[i] += -400.0 * x[i] * t - 2.0 * (1.0 - x[i]);
                    g[i + 1] += 200.0 * t;
                }
            }
            Objective::Arwhead => {
                for i in 0..n - 1 {
                    let s = x[i] * x[i] + x[n - 1] * x[n - 1];
                    g[i] += 4.0 * s * x[i] - 4.0;
                    g[n - 1] += 4.0 * s * x[n - 1];
                }
            }
            Objective::Dqrtic => {
                for (i, (g, v)) in g.iter_mut().zip(x).enumerate() {
                    *g = 4.0 * (v - (i + 1) as f64).powi(3);
                }
            }
            Objective::Tridia => {
                g[0] = 2.0 * (x[0] - 1.0);
                for i in 1..n {
                    let w = (i + 1) as f64;
                    let t = 2.0 * x[i] - x[i - 1];
                    g[i] += 4.0 * w * t;
                    g[i - 1] -= 2.0 * w * t;
                }
            }
            Objective::Engval1 => {
                for i in 0..n - 1 {
                    let s = x[i] * x[i] + x[i + 1] * x[i + 1];
                    g[i] += 4.0 * s * x[i] - 4.0;
                    g[i + 1] += 4.0 * s * x[i + 1];
                }
            }
            Objective::CosineChain => {
                for i in 0..n - 1 {
                    let s = -(-0.5 * x[i + 1] + x[i] * x[i]).sin();
                    g[i] += 2.0 * x[i] * s;
                    g[i + 1] -= 0.5 * s;
                }
            }
            Objective::Custom { grad, .. } => return grad.as_ref().map(|gf| gf(x)),
        }
        Some(g)
    }
}

/// Catalog lookup by name and dimension.
pub fn builtin_problem(name: &str, n: usize) -> Result<Problem> {
    let (objective, min_n) = match name {
        "sphere" => (Objective::Sphere, 1),
        "quad_illcond" => (Objective::QuadIllcond, 1),
        "rosenbrock_ext" => (Objective::RosenbrockExt, 2),
        "arwhead" => (Objective::Arwhead, 2),
        "dqrtic" => (Objective::Dqrtic, 1),
        "tridia" => (Objective::Tridia, 1),
        "engval1" => (Objective::Engval1, 2),
        "cosine_chain" => (Objective::CosineChain, 2),
        _ => return Err(Error::Catalog(format!("unknown problem `{name}`"))),
    };
    if n < min_n {
        return Err(Error::Catalog(format!("`{name}` needs n >= {min_n}, got {n}")));
    }
    let x0 = match objective {
        Objective::RosenbrockExt => (0..n).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect(),
        Objective::Dqrtic | Objective::Engval1 => vec![2.0; n],
        _ => vec![1.0; n],
    };
    let f_star = match objective {
        Objective::Engval1 => None,
        Objective::CosineChain => Some(-((n - 1) as f64)),
        _ => Some(0.0),
    };
    Ok(Problem {
        name: name.to_string(),
        n,
        x0,
        f_star,
        objective,
    })
}

/// Additive, homoscedastic Gaussian noise with per-call variance `sigma2_f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianNoiseModel {
    sigma2_f: f64,
}

impl GaussianNoiseModel {
    pub fn new(sigma2_f: f64) -> Result<Self> {
        if !(sigma2_f >= 0.0) || !sigma2_f.is_finite() {
            return Err(Error::param("sigma2_f", format!("must be finite and >= 0, got {sigma2_f}")));
        }
        Ok(Self { sigma2_f })
    }

    pub fn sigma2_f(&self) -> f64 {
        self.sigma2_f
    }

    /// Variance of one `Y` draw: two independent calls.
    pub fn sigma2_y(&self) -> f64 {
        2.0 * self.sigma2_f
    }

    pub fn sd(&self) -> f64 {
        self.sigma2_f.sqrt()
    }
}

/// Per-run count of zeroth-order oracle calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleCounter(u64);

impl OracleCounter {
    pub fn calls(&self) -> u64 {
        self.0
    }

    fn bump(&mut self) {
        self.0 += 1;
    }
}

/// One noisy observation `F(x, xi) = f(x) + N(0, sigma2_f)`.
pub fn noisy_eval(
    problem: &Problem,
    noise: &GaussianNoiseModel,
    x: &[f64],
    stream: &mut RngStream,
    counter: &mut OracleCounter,
) -> Result<f64> {
    if x.len() != problem.n() {
        return Err(Error::param(
            "x",
            format!("length {} but problem `{}` has n = {}", x.len(), problem.name(), problem.n()),
        ));
    }
    let f = problem.eval(x);
    counter.bump();
    gaussian(stream, f, noise.sd())
}

/// `x + delta * d`.
pub fn trial_point(x: &[f64], d: &Direction, delta: f64) -> Vec<f64> {
    x.iter().zip(d.components()).map(|(xi, di)| xi + delta * di).collect()
}

/// Sampler of `Y = c delta^2 - (F(x, xi_x) - F(x + delta d, xi_d))`.
///
/// Each draw makes two oracle calls with independent noise, so draws have
/// mean `c delta^2 - (f(x) - f(x + delta d))` and variance `2 sigma2_f`.
#[derive(Debug, Clone)]
pub struct DecreaseObservable<'a> {
    problem: &'a Problem,
    noise: GaussianNoiseModel,
    x: Vec<f64>,
    trial: Vec<f64>,
    delta: f64,
    c: f64,
    f_x: f64,
    f_trial: f64,
    counter: OracleCounter,
}

impl<'a> DecreaseObservable<'a> {
    pub fn new(
        problem: &'a Problem,
        noise: GaussianNoiseModel,
        x: &[f64],
        d: &Direction,
        delta: f64,
        c: f64,
    ) -> Result<Self> {
        if x.len() != problem.n() || d.dim() != problem.n() {
            return Err(Error::param("x", "point and direction must match the problem dimension"));
        }
        if !(delta > 0.0) || !(c > 0.0) {
            return Err(Error::param("delta", "stepsize and c must be > 0"));
        }
        let trial = trial_point(x, d, delta);
        Ok(Self {
            problem,
            noise,
            f_x: problem.eval(x),
            f_trial: problem.eval(&trial),
            x: x.to_vec(),
            trial,
            delta,
            c,
            counter: OracleCounter::default(),
        })
    }

    pub fn trial(&self) -> &[f64] {
        &self.trial
    }

    /// `E[Y] = c delta^2 - (f(x) - f(x + delta d))`.
    pub fn mean(&self) -> f64 {
        self.c * self.delta * self.delta - (self.f_x - self.f_trial)
    }

    pub fn variance(&self) -> f64 {
        self.noise.sigma2_y()
    }

    pub fn calls(&self) -> u64 {
        self.counter.calls()
    }

    pub fn draw_y(&mut self, stream: &mut RngStream) -> f64 {
        let sd = self.noise.sd();
        // the objective values are cached; the oracle calls are still two
        // independent noisy observations
        self.counter.bump();
        let at_x = gaussian(stream, self.f_x, sd).expect("sd is finite and >= 0");
        self.counter.bump();
        let at_trial = gaussian(stream, self.f_trial, sd).expect("sd is finite and >= 0");
        self.c * self.delta * self.delta - (at_x - at_trial)
    }

    pub fn point(&self) -> &[f64] {
        &self.x
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }
}

impl YSampler for DecreaseObservable<'_> {
    fn draw(&mut self, stream: &mut RngStream) -> f64 {
        self.draw_y(stream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastics::uniform_sphere_direction;

    fn sample_stats(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
    }

    // Straight transcriptions of the catalog formulas, kept independent of
    // the iterator-based implementations above.
    fn reference(name: &str, x: &[f64]) -> f64 {
        let n = x.len();
        let mut f = 0.0;
        match name {
            "sphere" => {
                for i in 0..n {
                    f += x[i] * x[i];
                }
            }
            "quad_illcond" => {
                for i in 0..n {
                    f += (i as f64 + 1.0) * x[i] * x[i];
                }
            }
            "rosenbrock_ext" => {
                for i in 0..n - 1 {
                    f += 100.0 * (x[i + 1] - x[i] * x[i]) * (x[i + 1] - x[i] * x[i])
                        + (1.0 - x[i]) * (1.0 - x[i]);
                }
            }
            "arwhead" => {
                for i in 0..n - 1 {
                    let s = x[i] * x[i] + x[n - 1] * x[n - 1];
                    f += s * s - 4.0 * x[i] + 3.0;
                }
            }
            "dqrtic" => {
                for i in 0..n {
                    let t = x[i] - (i as f64 + 1.0);
                    f += t * t * t * t;
                }
            }
            "tridia" => {
                f = (x[0] - 1.0) * (x[0] - 1.0);
                for i in 1..n {
                    let t = 2.0 * x[i] - x[i - 1];
                    f += (i as f64 + 1.0) * t * t;
                }
            }
            "engval1" => {
                for i in 0..n - 1 {
                    let s = x[i] * x[i] + x[i + 1] * x[i + 1];
                    f += s * s - 4.0 * x[i] + 3.0;
                }
            }
            "cosine_chain" => {
                for i in 0..n - 1 {
                    f += (-0.5 * x[i + 1] + x[i] * x[i]).cos();
                }
            }
            _ => unreachable!(),
        }
        f
    }

    #[test]
    fn catalog_examples() {
        let p = builtin_problem("sphere", 2).unwrap();
        assert_eq!(p.eval(&[1.0, 1.0]), 2.0);
        let p = builtin_problem("rosenbrock_ext", 2).unwrap();
        assert_eq!(p.eval(&[1.0, 1.0]), 0.0);
        assert_eq!(p.f_star(), Some(0.0));
        assert_eq!(p.x0(), &[-1.2, 1.0]);
        let p = builtin_problem("tridia", 3).unwrap();
        assert_eq!(p.eval(&[1.0, 1.0, 1.0]), 5.0);
        assert_eq!(reference("tridia", &[1.0, 1.0, 1.0]), 5.0);
        assert_eq!(builtin_problem("cosine_chain", 10).unwrap().f_star(), Some(-9.0));
        assert_eq!(builtin_problem("engval1", 10).unwrap().f_star(), None);
    }

    #[test]
    fn catalog_errors() {
        assert!(matches!(builtin_problem("nope", 2), Err(Error::Catalog(_))));
        assert!(matches!(builtin_problem("rosenbrock_ext", 1), Err(Error::Catalog(_))));
        assert!(matches!(builtin_problem("sphere", 0), Err(Error::Catalog(_))));
    }

    #[test]
    fn known_minimizers_attain_f_star() {
        let cases: [(&str, Vec<f64>); 6] = [
            ("sphere", vec![0.0; 5]),
            ("quad_illcond", vec![0.0; 5]),
            ("rosenbrock_ext", vec![1.0; 5]),
            ("arwhead", vec![1.0, 1.0, 1.0, 1.0, 0.0]),
            ("dqrtic", vec![1.0, 2.0, 3.0, 4.0, 5.0]),
            ("tridia", vec![1.0, 0.5, 0.25, 0.125, 0.0625]),
        ];
        for (name, x) in cases {
            let p = builtin_problem(name, 5).unwrap();
            assert!(p.eval(&x).abs() < 1e-12, "{name}: {}", p.eval(&x));
        }
        // engval1 with n = 2 has its minimum 0 at (1, 0)
        assert_eq!(builtin_problem("engval1", 2).unwrap().eval(&[1.0, 0.0]), 0.0);
    }

    #[test]
    fn implementations_match_reference_formulas() {
        let mut s = RngStream::new(5);
        for name in CATALOG {
            for n in [2, 3, 10, 50] {
                let p = builtin_problem(name, n).unwrap();
                for _ in 0..5 {
                    let x: Vec<f64> = (0..n).map(|_| 2.0 * s.standard_normal()).collect();
                    let (a, b) = (p.eval(&x), reference(name, &x));
                    assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{name}/{n}");
                }
                let x0 = p.x0().to_vec();
                let (a, b) = (p.eval(&x0), reference(name, &x0));
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        for name in CATALOG {
            for n in [2, 10, 50] {
                let p = builtin_problem(name, n).unwrap();
                let x0 = p.x0().to_vec();
                let g = p.grad(&x0).unwrap();
                let scale = g.iter().map(|v| v.abs()).fold(1.0, f64::max);
                for i in 0..n {
                    let h = 1e-6 * (1.0 + x0[i].abs());
                    let (mut xp, mut xm) = (x0.clone(), x0.clone());
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (p.eval(&xp) - p.eval(&xm)) / (2.0 * h);
                    assert!(
                        (fd - g[i]).abs() <= 1e-5 * scale,
                        "{name}/{n} component {i}: fd {fd} vs {}",
                        g[i]
                    );
                }
            }
        }
    }

    #[test]
    fn noiseless_eval_is_exact_and_counted() {
        let p = builtin_problem("sphere", 2).unwrap();
        let noise = GaussianNoiseModel::new(0.0).unwrap();
        let mut s = RngStream::new(0);
        let mut counter = OracleCounter::default();
        assert_eq!(noisy_eval(&p, &noise, &[1.0, 1.0], &mut s, &mut counter).unwrap(), 2.0);
        assert_eq!(counter.calls(), 1);
        assert!(noisy_eval(&p, &noise, &[1.0], &mut s, &mut counter).is_err());
        assert_eq!(counter.calls(), 1);
    }

    #[test]
    fn noisy_eval_is_unbiased_with_stated_variance() {
        let p = builtin_problem("quad_illcond", 3).unwrap();
        let x = [0.5, -1.0, 2.0];
        let fx = p.eval(&x);
        let mut counter = OracleCounter::default();

        let noise = GaussianNoiseModel::new(1.0).unwrap();
        let mut s = RngStream::new(12);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| noisy_eval(&p, &noise, &x, &mut s, &mut counter).unwrap())
            .collect();
        assert!((sample_stats(&xs).0 - fx).abs() < 0.01);

        let noise = GaussianNoiseModel::new(0.01).unwrap();
        let xs: Vec<f64> = (0..100_000)
            .map(|_| noisy_eval(&p, &noise, &x, &mut s, &mut counter).unwrap())
            .collect();
        let var = sample_stats(&xs).1;
        // sd of the sample variance: 0.01 * sqrt(2/N) ~ 4.5e-5
        assert!((var - 0.01).abs() < 2e-4, "{var}");
        assert_eq!(counter.calls(), 200_000);
    }

    #[test]
    fn decrease_observable_examples() {
        let p = builtin_problem("sphere", 2).unwrap();
        let d = Direction::from_vec(vec![-1.0, 0.0]).unwrap();
        let noiseless = GaussianNoiseModel::new(0.0).unwrap();
        let mut obs = DecreaseObservable::new(&p, noiseless, &[1.0, 0.0], &d, 1.0, 0.5).unwrap();
        let mut s = RngStream::new(0);
        assert_eq!(obs.draw_y(&mut s), -0.5);
        assert_eq!(obs.calls(), 2);

        let noise = GaussianNoiseModel::new(1.0).unwrap();
        let mut obs = DecreaseObservable::new(&p, noise, &[1.0, 0.0], &d, 1.0, 0.5).unwrap();
        let ys: Vec<f64> = (0..100_000).map(|_| obs.draw_y(&mut s)).collect();
        let (mean, var) = sample_stats(&ys);
        assert!((mean + 0.5).abs() < 0.015, "{mean}");
        assert!((var - 2.0).abs() < 0.05, "{var}");
        assert_eq!(obs.calls(), 200_000);
    }

    #[test]
    fn observable_mean_matches_for_random_tuples() {
        let mut s = RngStream::new(404);
        let noise = GaussianNoiseModel::new(1.0).unwrap();
        let draws = 100_000;
        for (i, name) in ["sphere", "rosenbrock_ext", "arwhead", "tridia", "cosine_chain"]
            .into_iter()
            .enumerate()
        {
            let p = builtin_problem(name, 2 + i).unwrap();
            let x: Vec<f64> = (0..p.n()).map(|_| 0.5 * s.standard_normal()).collect();
            let d = uniform_sphere_direction(&mut s, p.n()).unwrap();
            let delta = 0.1 + s.next_f64();
            let mut obs = DecreaseObservable::new(&p, noise, &x, &d, delta, 0.5).unwrap();
            let expected = 0.5 * delta * delta - (p.eval(&x) - p.eval(obs.trial()));
            assert_eq!(obs.mean(), expected);
            let mean = (0..draws).map(|_| obs.draw_y(&mut s)).sum::<f64>() / draws as f64;
            let band = 4.0 * (2.0 * noise.sigma2_f() / draws as f64).sqrt();
            assert!((mean - expected).abs() <= band, "{name}: {mean} vs {expected}");
        }
    }

    #[test]
    fn noise_model_validation() {
        assert!(GaussianNoiseModel::new(-0.1).is_err());
        assert!(GaussianNoiseModel::new(f64::INFINITY).is_err());
        assert_eq!(GaussianNoiseModel::new(0.5).unwrap().sigma2_y(), 1.0);
    }
}
