//! Synthetic test functions on the boxes used in the experiments.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::BoxDomain;

/// A function to minimize over a box.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;
    fn domain(&self) -> &BoxDomain;
    /// Known global minimum, used only for regret reporting.
    fn true_min(&self) -> Option<f64>;
    /// Noise-free value.
    fn eval(&self, x: &[f64]) -> f64;

    fn dim(&self) -> usize {
        self.domain().dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticFunction {
    Branin2,
    Rosenbrock3,
    Ackley5,
    Hartmann6,
}

/// Global minimum of Branin, `5/(4π)`.
pub const BRANIN_MIN: f64 = 0.397_887_357_729_738_1;
/// Global minimum of Hartmann6.
pub const HARTMANN6_MIN: f64 = -3.322_368_011_415_51;

impl SyntheticFunction {
    pub const ALL: [SyntheticFunction; 4] = [
        SyntheticFunction::Branin2,
        SyntheticFunction::Rosenbrock3,
        SyntheticFunction::Ackley5,
        SyntheticFunction::Hartmann6,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SyntheticFunction::Branin2 => "branin2",
            SyntheticFunction::Rosenbrock3 => "rosenbrock3",
            SyntheticFunction::Ackley5 => "ackley5",
            SyntheticFunction::Hartmann6 => "hartmann6",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.name() == name.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown objective {name:?}")))
    }

    pub fn dim(&self) -> usize {
        match self {
            SyntheticFunction::Branin2 => 2,
            SyntheticFunction::Rosenbrock3 => 3,
            SyntheticFunction::Ackley5 => 5,
            SyntheticFunction::Hartmann6 => 6,
        }
    }

    pub fn domain(&self) -> BoxDomain {
        let d = self.dim();
        let (lo, hi) = match self {
            SyntheticFunction::Branin2 => (-15.0, 15.0),
            SyntheticFunction::Rosenbrock3 | SyntheticFunction::Ackley5 => (-2.0, 2.0),
            SyntheticFunction::Hartmann6 => (0.0, 1.0),
        };
        BoxDomain::cube(d, lo, hi).expect("static box")
    }

    /// Evaluation budget of a standard run: about 60 evaluations in up to
    /// three dimensions, about 100 beyond.
    pub fn default_budget(&self) -> usize {
        if self.dim() <= 3 {
            60
        } else {
            100
        }
    }

    /// Iterations needed to spend [`default_budget`](Self::default_budget)
    /// after `initial` design points with batches of `q` (rounded up).
    pub fn default_iterations(&self, q: usize, initial: usize) -> usize {
        self.default_budget().saturating_sub(initial).div_ceil(q.max(1)).max(1)
    }

    pub fn true_min(&self) -> f64 {
        match self {
            SyntheticFunction::Branin2 => BRANIN_MIN,
            SyntheticFunction::Rosenbrock3 | SyntheticFunction::Ackley5 => 0.0,
            SyntheticFunction::Hartmann6 => HARTMANN6_MIN,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            SyntheticFunction::Branin2 => branin(x),
            SyntheticFunction::Rosenbrock3 => rosenbrock(x),
            SyntheticFunction::Ackley5 => ackley(x),
            SyntheticFunction::Hartmann6 => hartmann6(x),
        }
    }

    pub fn objective(&self) -> SyntheticObjective {
        SyntheticObjective {
            function: *self,
            domain: self.domain(),
        }
    }
}

/// [`SyntheticFunction`] bound to its domain.
#[derive(Debug, Clone)]
pub struct SyntheticObjective {
    function: SyntheticFunction,
    domain: BoxDomain,
}

impl Objective for SyntheticObjective {
    fn name(&self) -> &str {
        self.function.name()
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn true_min(&self) -> Option<f64> {
        Some(self.function.true_min())
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.function.eval(x)
    }
}

pub fn branin(x: &[f64]) -> f64 {
    let (a, b, c, r, s, t) = (
        1.0,
        5.1 / (4.0 * PI * PI),
        5.0 / PI,
        6.0,
        10.0,
        1.0 / (8.0 * PI),
    );
    a * (x[1] - b * x[0] * x[0] + c * x[0] - r).powi(2) + s * (1.0 - t) * x[0].cos() + s
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

pub fn ackley(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
    let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / d;
    let v = -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + std::f64::consts::E;
    // cancellation leaves ~1e-16 at the origin
    v.max(0.0)
}

const H6_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const H6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const H6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

pub fn hartmann6(x: &[f64]) -> f64 {
    -(0..4)
        .map(|i| {
            let inner: f64 = (0..6).map(|j| H6_A[i][j] * (x[j] - H6_P[i][j]).powi(2)).sum();
            H6_ALPHA[i] * (-inner).exp()
        })
        .sum::<f64>()
}

/// Noise-free value of a named synthetic function; rejects points outside
/// its domain.
pub fn eval_objective(name: &str, x: &[f64]) -> Result<f64> {
    let f = SyntheticFunction::parse(name)?;
    if !f.domain().contains(x) {
        return Err(Error::InvalidArgument(format!(
            "{x:?} lies outside the {} domain",
            f.name()
        )));
    }
    Ok(f.eval(x))
}

/// `eval(x) + noise_sd·ε`, `ε ~ N(0, 1)`.
pub fn observe<R: Rng + ?Sized>(objective: &dyn Objective, x: &[f64], noise_sd: f64, rng: &mut R) -> f64 {
    let f = objective.eval(x);
    if noise_sd == 0.0 {
        return f;
    }
    let eps: f64 = StandardNormal.sample(rng);
    f + noise_sd * eps
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_iterations_match_the_budgets() {
        assert_eq!(SyntheticFunction::Branin2.default_iterations(4, 6), 14);
        assert_eq!(SyntheticFunction::Hartmann6.default_iterations(4, 14), 22);
        assert_eq!(SyntheticFunction::Rosenbrock3.default_iterations(1, 8), 52);
        assert_eq!(SyntheticFunction::Ackley5.default_iterations(4, 200), 1);
    }

    #[test]
    fn known_minima() {
        assert!(eval_objective("rosenbrock3", &[1.0, 1.0, 1.0]).unwrap().abs() < 1e-15);
        assert!(eval_objective("ackley5", &[0.0; 5]).unwrap().abs() < 1e-12);
        assert!((branin(&[PI, 2.275]) - BRANIN_MIN).abs() < 1e-9);
        let xh = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];
        assert!((hartmann6(&xh) - HARTMANN6_MIN).abs() < 1e-5);
    }

    #[test]
    fn out_of_box_is_rejected() {
        assert!(eval_objective("branin2", &[16.0, 0.0]).is_err());
        assert!(eval_objective("nope", &[0.0]).is_err());
    }

    #[test]
    fn noise_free_observation_is_exact_and_noise_averages_out() {
        let obj = SyntheticFunction::Branin2.objective();
        let x = [1.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(observe(&obj, &x, 0.0, &mut rng), obj.eval(&x));
        let mean = (0..10_000).map(|_| observe(&obj, &x, 0.5, &mut rng)).sum::<f64>() / 1e4;
        assert!((mean - obj.eval(&x)).abs() < 4.0 * 0.5 / 100.0);
        let a: Vec<f64> = (0..5)
            .map(|_| observe(&obj, &x, 0.5, &mut ChaCha8Rng::seed_from_u64(9)))
            .collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
    }
}
