//! Batch acquisition functions: the parallel knowledge gradient (q-KG), its
//! asynchronous variant, and the baseline policies it is compared against.

mod baselines;
mod engine;
mod qkg;

pub use baselines::{
    gp_bucb_from_pool, gp_bucb_select, gp_ucb_pe_from_pool, gp_ucb_pe_select, qei_gradient, qei_value, BaselineConfig, BetaSchedule,
    QeiProblem,
};
pub use qkg::{
    qkg_async, qkg_gradient, qkg_value, sample_inner_g, sigma_tilde, BeforeSet, InnerSample,
    QkgProblem,
};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sampling::BoxDomain;

/// Default MC sample count for value-only evaluations.
pub const DEFAULT_VALUE_SAMPLES: usize = 1024;
/// Default MC sample count per stochastic-gradient step.
pub const DEFAULT_GRADIENT_SAMPLES: usize = 128;

/// Ordered set of `q` candidate points.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    points: Vec<Vec<f64>>,
}

impl Batch {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidArgument("batch needs q >= 1".into()));
        };
        let d = first.len();
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidArgument("ragged batch".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite batch coordinate".into()));
        }
        Ok(Self { points })
    }

    pub fn q(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec<f64>> {
        self.points
    }

    /// Rows of `self` followed by the rows of `other`.
    pub fn stack(&self, other: &Batch) -> Result<Batch> {
        crate::error::dim_check(self.dim(), other.dim(), "Batch::stack")?;
        let mut points = self.points.clone();
        points.extend(other.points.iter().cloned());
        Ok(Batch { points })
    }

    pub fn check_inside(&self, domain: &BoxDomain) -> Result<()> {
        if self.points.iter().all(|p| domain.contains(p)) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("batch row outside the domain".into()))
        }
    }
}

/// Source of the standard normal vectors `Z_q`.
///
/// `Seeded` gives sample `m` its own ChaCha stream, so two estimates with the
/// same seed see identical draws sample by sample (common random numbers).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalStream {
    Seeded(u64),
    /// All-zero draws; test hook.
    Zero,
}

impl NormalStream {
    pub fn draw(&self, index: usize, q: usize) -> DVector<f64> {
        match *self {
            NormalStream::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(index as u64);
                DVector::from_iterator(q, (0..q).map(|_| StandardNormal.sample(&mut rng)))
            }
            NormalStream::Zero => DVector::zeros(q),
        }
    }

    pub fn seed(&self) -> u64 {
        match *self {
            NormalStream::Seeded(s) => s,
            NormalStream::Zero => 0,
        }
    }
}

/// Monte Carlo estimate of an acquisition value and, optionally, its
/// gradient with respect to the batch coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticEstimate {
    pub value: f64,
    pub value_stderr: f64,
    pub gradient: Option<Vec<Vec<f64>>>,
    pub gradient_stderr: Option<Vec<Vec<f64>>>,
    pub n_mc: usize,
    pub seed: u64,
}

impl StochasticEstimate {
    /// Gradient matrix, or an error for value-only estimates.
    pub fn gradient(&self) -> Result<&[Vec<f64>]> {
        self.gradient
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("estimate carries no gradient".into()))
    }
}

pub(crate) fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub(crate) fn check_samples(n_mc: usize) -> Result<()> {
    if n_mc < 2 {
        return Err(Error::Precondition(format!("n_mc must be >= 2, got {n_mc}")));
    }
    Ok(())
}
