//! Gaussian-process prior and posterior machinery.
//!
//! The prior is a constant mean plus an ARD Matérn 5/2 kernel with a
//! homoscedastic noise term. [`Posterior`] is an immutable snapshot of the
//! conditioned process and is shared read-only by the acquisition code.

mod cholesky;
mod kernel;
mod mle;
mod posterior;

pub use cholesky::{cholesky_derivative, cholesky_with_jitter, JITTER_LADDER};
pub use kernel::{kernel_eval, kernel_grad_x1, matern52, matern52_grad_x1};
pub use mle::{fit_hyperparameters_mle, fit_mle, log_marginal_likelihood, HyperBounds, MleFit};
pub use posterior::{
    build_posterior, posterior_cov, posterior_mean, posterior_mean_grad, Posterior,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::BoxDomain;

/// Hyperparameters of the GP prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub mean_const: f64,
    pub signal_variance: f64,
    pub length_scales: Vec<f64>,
    pub noise_variance: f64,
}

impl ModelSpec {
    pub fn new(
        mean_const: f64,
        signal_variance: f64,
        length_scales: Vec<f64>,
        noise_variance: f64,
    ) -> Result<Self> {
        let spec = Self {
            mean_const,
            signal_variance,
            length_scales,
            noise_variance,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Unit-amplitude prior with all length scales equal to `length_scale`.
    pub fn isotropic(dim: usize, signal_variance: f64, length_scale: f64) -> Self {
        Self {
            mean_const: 0.0,
            signal_variance,
            length_scales: vec![length_scale; dim],
            noise_variance: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.signal_variance.is_finite() || self.signal_variance <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "signal_variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if self.length_scales.is_empty() {
            return Err(Error::InvalidArgument("no length scales".into()));
        }
        if let Some(l) = self
            .length_scales
            .iter()
            .find(|l| !l.is_finite() || **l <= 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "length scales must be positive, got {l}"
            )));
        }
        if !self.noise_variance.is_finite() || self.noise_variance < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise_variance must be non-negative, got {}",
                self.noise_variance
            )));
        }
        if !self.mean_const.is_finite() {
            return Err(Error::InvalidArgument("mean_const is not finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    /// Observation noise variance at `x`. Only the constant model ships.
    pub fn noise_at(&self, _x: &[f64]) -> f64 {
        self.noise_variance
    }

    pub fn with_noise(mut self, noise_variance: f64) -> Self {
        self.noise_variance = noise_variance;
        self
    }
}

/// Observed design points and their (possibly noisy) values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if let Some(first) = points.first() {
            let d = first.len();
            if points.iter().any(|p| p.len() != d) {
                return Err(Error::InvalidArgument("ragged point matrix".into()));
            }
        }
        if values.iter().any(|v| !v.is_finite()) || points.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument("non-finite data".into()));
        }
        Ok(Self { points, values })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if let Some(first) = self.points.first() {
            crate::error::dim_check(first.len(), x.len(), "Dataset::push")?;
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite observation {y} at {x:?}")));
        }
        self.points.push(x);
        self.values.push(y);
        Ok(())
    }

    /// Checks that every point lies in `domain`.
    pub fn check_inside(&self, domain: &BoxDomain) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !domain.contains(p) {
                return Err(Error::InvalidArgument(format!(
                    "observation {i} lies outside the domain"
                )));
            }
        }
        Ok(())
    }

    /// Unbiased sample variance of the values (0 for fewer than two).
    pub fn value_variance(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.values.iter().sum::<f64>() / n as f64;
        self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    }

    /// Same points with values mapped through `f`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            points: self.points.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }
}
