//! The batch Bayesian optimization loop.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{
    gp_bucb_select, gp_ucb_pe_select, BaselineConfig, Batch, BeforeSet, NormalStream, QeiProblem,
    QkgProblem, DEFAULT_GRADIENT_SAMPLES, DEFAULT_VALUE_SAMPLES,
};
use crate::bench::objectives::{observe, Objective, SyntheticFunction};
use crate::error::{Error, Result};
use crate::gp::{fit_mle, Dataset, HyperBounds, ModelSpec, Posterior};
use crate::optimizer::{sga_maximize, SgaSchedule};
use crate::sampling::{
    build_discretization, latin_hypercube, BoxDomain, DiscreteSet, Provenance, DEFAULT_POOL_SIZE,
};

/// Batch selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Qkg,
    Qei,
    GpBucb,
    GpUcbPe,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Qkg, Policy::Qei, Policy::GpBucb, Policy::GpUcbPe];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Qkg => "qkg",
            Policy::Qei => "qei",
            Policy::GpBucb => "gp_bucb",
            Policy::GpUcbPe => "gp_ucb_pe",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown policy {s:?}")))
    }
}

/// Computational knobs of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tuning {
    pub gradient_samples: usize,
    pub value_samples: usize,
    pub sga_starts: usize,
    pub sga_steps: usize,
    /// Step base as a fraction of the mean box width.
    pub sga_step_fraction: f64,
    pub sga_offset: f64,
    pub sga_alpha: f64,
    pub pool_size: usize,
    pub mle_restarts: usize,
    pub baseline_pool_size: usize,
    /// Test hook: the discretization is only the past observations and the
    /// batch, and the current minimum is taken over past observations.
    pub restrict_to_observations: bool,
    /// Pin the model noise variance (in standardized units) instead of
    /// estimating it.
    pub fixed_noise_variance: Option<f64>,
}

impl Default for Tuning {
    fn default() -> Self {
        Self {
            gradient_samples: DEFAULT_GRADIENT_SAMPLES,
            value_samples: DEFAULT_VALUE_SAMPLES,
            sga_starts: 8,
            sga_steps: 100,
            sga_step_fraction: 0.3,
            sga_offset: 10.0,
            sga_alpha: 0.7,
            pool_size: DEFAULT_POOL_SIZE,
            mle_restarts: 8,
            baseline_pool_size: 2000,
            restrict_to_observations: false,
            fixed_noise_variance: None,
        }
    }
}

/// One optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub objective: SyntheticFunction,
    pub policy: Policy,
    pub q: usize,
    pub initial: usize,
    pub iterations: usize,
    pub noise_sd: f64,
    pub discretization_samples: usize,
    pub seed: u64,
    pub async_p: usize,
    #[serde(default)]
    pub tuning: Tuning,
}

impl RunConfig {
    /// Defaults: `q = 4`, `I = 2d + 2`, `M = 1000`, noise-free, synchronous.
    pub fn new(objective: SyntheticFunction, policy: Policy, iterations: usize, seed: u64) -> Self {
        Self {
            objective,
            policy,
            q: 4,
            initial: 2 * objective.dim() + 2,
            iterations,
            noise_sd: 0.0,
            discretization_samples: 1000,
            seed,
            async_p: 0,
            tuning: Tuning::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial < 2 {
            return Err(Error::InvalidArgument("need at least 2 initial samples".into()));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidArgument("need at least 1 iteration".into()));
        }
        if self.q < 1 {
            return Err(Error::InvalidArgument("q must be >= 1".into()));
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(Error::InvalidArgument("noise_sd must be >= 0".into()));
        }
        if self.async_p > 0 && (self.async_p >= self.q || self.policy != Policy::Qkg) {
            return Err(Error::InvalidArgument(
                "asynchronous runs need policy qkg and async_p < q".into(),
            ));
        }
        if let Some(v) = self.tuning.fixed_noise_variance {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument("fixed_noise_variance must be >= 0".into()));
            }
        }
        if self.tuning.gradient_samples < 2 || self.tuning.value_samples < 2 {
            return Err(Error::InvalidArgument("need at least 2 MC samples".into()));
        }
        Ok(())
    }
}

/// One row of a [`RunTrace`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub evaluations: usize,
    pub recommended: Vec<f64>,
    pub recommended_value: f64,
    pub regret: f64,
    pub wall_ms: f64,
    /// Hyperparameter fitting failed and the previous values were reused.
    pub fit_reused: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub observations: Vec<(Vec<f64>, f64)>,
    pub final_recommendation: Vec<f64>,
}

impl RunTrace {
    pub fn final_regret(&self) -> Option<f64> {
        self.records.last().map(|r| r.regret)
    }
}

#[derive(Debug, Error)]
#[error("run failed after {} iterations: {error}", partial.records.len())]
pub struct RunFailure {
    pub error: Error,
    pub partial: RunTrace,
}

const POLISH_STEPS: usize = 30;

/// Algorithm-1 loop for a synthetic objective.
pub fn run_bo_loop(config: &RunConfig) -> std::result::Result<RunTrace, RunFailure> {
    let objective = config.objective.objective();
    run_bo_loop_with(&objective, config)
}

/// Algorithm-1 loop for any [`Objective`]; `config.objective` is ignored.
pub fn run_bo_loop_with(
    objective: &dyn Objective,
    config: &RunConfig,
) -> std::result::Result<RunTrace, RunFailure> {
    let mut trace = RunTrace::default();
    match drive(objective, config, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(RunFailure {
            error,
            partial: trace,
        }),
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct Standardizer {
    shift: f64,
    scale: f64,
}

impl Standardizer {
    fn fit(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let shift = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - shift).powi(2)).sum::<f64>() / n;
        let scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
        Self { shift, scale }
    }

    fn apply(&self, data: &Dataset) -> Dataset {
        data.map_values(|v| (v - self.shift) / self.scale)
    }
}

fn fallback_spec(domain: &BoxDomain) -> ModelSpec {
    ModelSpec {
        mean_const: 0.0,
        signal_variance: 1.0,
        length_scales: (0..domain.dim()).map(|j| 0.25 * domain.width(j)).collect(),
        noise_variance: 1e-6,
    }
}

fn drive(objective: &dyn Objective, config: &RunConfig, trace: &mut RunTrace) -> Result<()> {
    config.validate()?;
    let domain = objective.domain().clone();
    let tuning = &config.tuning;
    let mut design_rng = stream(config.seed, 0);
    let mut model_rng = stream(config.seed, 1);
    let mut acq_rng = stream(config.seed, 2);

    let mut data = Dataset::empty();
    for x in latin_hypercube(config.initial, &domain, &mut design_rng)? {
        let y = observe(objective, &x, config.noise_sd, &mut design_rng);
        trace.observations.push((x.clone(), y));
        data.push(x, y)?;
    }
    let mut pending: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut prev_spec: Option<ModelSpec> = None;

    for s in 0..=config.iterations {
        let started = Instant::now();
        if s == config.iterations {
            for (x, y) in pending.drain(..) {
                data.push(x, y)?;
            }
        }
        let standardizer = Standardizer::fit(data.values());
        let std_data = standardizer.apply(&data);
        let bounds = HyperBounds::for_data(&std_data, &domain);
        let warm: Vec<ModelSpec> = prev_spec.iter().cloned().collect();
        let fitted = fit_mle(&std_data, &bounds, tuning.mle_restarts, &mut model_rng, &warm)
            .map(|f| match tuning.fixed_noise_variance {
                Some(v) => f.spec.with_noise(v),
                None => f.spec,
            })
            .and_then(|spec| Posterior::new(std_data.clone(), spec.clone()).map(|p| (spec, p)));
        let (spec, post, fit_reused) = match fitted {
            Ok((spec, post)) => (spec, post, false),
            Err(_) => {
                let spec = prev_spec.clone().unwrap_or_else(|| fallback_spec(&domain));
                let post = Posterior::new(std_data.clone(), spec.clone())?;
                (spec, post, true)
            }
        };
        prev_spec = Some(spec);

        let disc = if tuning.restrict_to_observations {
            let mut d = DiscreteSet::new();
            d.extend(data.points().iter().cloned(), Provenance::PastObservation);
            d
        } else {
            let empty = Batch::new(vec![domain.center()])?;
            build_discretization(
                &post,
                &empty,
                config.discretization_samples,
                tuning.pool_size,
                &domain,
                &mut model_rng,
            )?
            .without_candidates()
        };

        let recommended = recommend(&post, &disc, &domain);
        let value = objective.eval(&recommended);
        let regret = objective.true_min().map_or(value, |m| value - m);

        if s < config.iterations {
            let pending_points: Vec<Vec<f64>> = pending.iter().map(|(x, _)| x.clone()).collect();
            let batch = select_batch(config, &post, &disc, &pending_points, &domain, s + 1, &mut acq_rng)?;
            let mut fresh = Vec::with_capacity(config.q);
            for mut x in batch.into_points() {
                domain.clamp(&mut x);
                let y = observe(objective, &x, config.noise_sd, &mut design_rng);
                trace.observations.push((x.clone(), y));
                fresh.push((x, y));
            }
            // the oldest pending points finish first
            let mut arrived: Vec<(Vec<f64>, f64)> = std::mem::take(&mut pending);
            let keep = config.async_p.min(fresh.len());
            let still_running = fresh.split_off(fresh.len() - keep);
            arrived.extend(fresh);
            for (x, y) in arrived {
                data.push(x, y)?;
            }
            pending = still_running;
        }

        trace.records.push(IterationRecord {
            iteration: s,
            evaluations: config.initial + s * config.q,
            recommended: recommended.clone(),
            recommended_value: value,
            regret,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            fit_reused,
        });
        trace.final_recommendation = recommended;
    }
    Ok(())
}

fn select_batch<R: Rng + ?Sized>(
    config: &RunConfig,
    post: &Posterior,
    disc: &DiscreteSet,
    pending: &[Vec<f64>],
    domain: &BoxDomain,
    iteration: usize,
    rng: &mut R,
) -> Result<Batch> {
    let tuning = &config.tuning;
    let schedule = SgaSchedule::new(
        tuning.sga_step_fraction * domain.mean_width(),
        tuning.sga_offset,
        tuning.sga_alpha,
        tuning.sga_steps,
        tuning.sga_starts,
    )?;
    let q = config.q;
    match config.policy {
        Policy::Qkg => {
            let before = if tuning.restrict_to_observations {
                BeforeSet::ExcludeCandidates
            } else {
                BeforeSet::Full
            };
            let problem = QkgProblem::new(post, disc).with_before_set(before);
            let pending_batch = if pending.is_empty() {
                None
            } else {
                Some(Batch::new(pending.to_vec())?)
            };
            let stacked = |b: &Batch| match &pending_batch {
                Some(p) => b.stack(p),
                None => Ok(b.clone()),
            };
            let grad_fn = |b: &Batch, seed: u64| {
                problem.partial_gradient(
                    &stacked(b)?,
                    q,
                    tuning.gradient_samples,
                    NormalStream::Seeded(seed),
                )
            };
            let value_fn = |b: &Batch, seed: u64| {
                problem.value(&stacked(b)?, tuning.value_samples, NormalStream::Seeded(seed))
            };
            Ok(sga_maximize(grad_fn, value_fn, domain, q, &schedule, rng)?.best)
        }
        Policy::Qei => {
            let problem = QeiProblem::new(post)?;
            let grad_fn = |b: &Batch, seed: u64| {
                problem.gradient(b, tuning.gradient_samples, NormalStream::Seeded(seed))
            };
            let value_fn = |b: &Batch, seed: u64| {
                problem.value(b, tuning.value_samples, NormalStream::Seeded(seed))
            };
            Ok(sga_maximize(grad_fn, value_fn, domain, q, &schedule, rng)?.best)
        }
        Policy::GpBucb | Policy::GpUcbPe => {
            let baseline = BaselineConfig {
                candidate_pool_size: tuning.baseline_pool_size,
                ..BaselineConfig::default()
            };
            if config.policy == Policy::GpBucb {
                gp_bucb_select(post, q, &baseline, iteration, domain, rng)
            } else {
                gp_ucb_pe_select(post, q, &baseline, iteration, domain, rng)
            }
        }
    }
}

/// Argmin of the posterior mean over `disc` (lowest index on ties), then a
/// short projected gradient descent on the mean.
pub fn recommend(post: &Posterior, disc: &DiscreteSet, domain: &BoxDomain) -> Vec<f64> {
    let candidates: Vec<&Vec<f64>> = disc
        .points()
        .iter()
        .chain(post.data().points().iter())
        .collect();
    let means: Vec<f64> = candidates.iter().map(|x| post.mean(x)).collect();
    let start = candidates[crate::sampling::argmin(&means)].clone();
    polish(post, start, domain)
}

fn polish(post: &Posterior, mut x: Vec<f64>, domain: &BoxDomain) -> Vec<f64> {
    let mut fx = post.mean(&x);
    let mut step = 0.05;
    for _ in 0..POLISH_STEPS {
        let g = post.mean_grad(&x);
        let norm = g
            .iter()
            .enumerate()
            .map(|(j, v)| (v * domain.width(j)).powi(2))
            .sum::<f64>()
            .sqrt();
        if !(norm > 1e-14) {
            break;
        }
        let mut improved = false;
        while step > 1e-6 {
            let mut cand: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(j, v)| v - step * domain.width(j) * domain.width(j) * g[j] / norm)
                .collect();
            domain.clamp(&mut cand);
            let fc = post.mean(&cand);
            if fc < fx {
                x = cand;
                fx = fc;
                improved = true;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    x
}
