//! Comparison policies: Monte Carlo parallel expected improvement, GP-BUCB
//! and GP-UCB-PE. The objective is minimized, so the UCB rules use the
//! lower confidence bound `μ − √β·σ`.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::engine::{
    cg_cache, replicates, BatchModel, GradientAccumulator, GradientKit, PreparedDisc, Scene,
};
use crate::acquisition::{check_samples, mean_and_stderr, Batch, NormalStream, StochasticEstimate};
use crate::error::{Error, Result};
use crate::gp::Posterior;
use crate::sampling::BoxDomain;

/// Width parameter `β_t` of the confidence bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BetaSchedule {
    /// `β_t = 2 ln(|pool| t² π² / (6δ))`.
    Standard { delta: f64 },
    Constant(f64),
}

impl BetaSchedule {
    pub fn beta(&self, t: usize, pool_size: usize) -> f64 {
        match *self {
            BetaSchedule::Standard { delta } => {
                let t = t.max(1) as f64;
                let v = 2.0
                    * (pool_size as f64 * t * t * std::f64::consts::PI.powi(2) / (6.0 * delta)).ln();
                v.max(0.0)
            }
            BetaSchedule::Constant(b) => b.max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub beta_schedule: BetaSchedule,
    pub candidate_pool_size: usize,
    pub n_mc: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            beta_schedule: BetaSchedule::Standard { delta: 0.1 },
            candidate_pool_size: 2000,
            n_mc: crate::acquisition::DEFAULT_VALUE_SAMPLES,
        }
    }
}

/// Parallel expected improvement `E[(min y − min_k μ⁽ⁿ⁺q⁾(z_k))⁺]`.
pub struct QeiProblem<'a> {
    post: &'a Posterior,
    empty: PreparedDisc,
    best: f64,
}

impl<'a> QeiProblem<'a> {
    pub fn new(post: &'a Posterior) -> Result<Self> {
        let best = post
            .data()
            .values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if post.n() == 0 {
            return Err(Error::Precondition("parallel EI needs n >= 1".into()));
        }
        Ok(Self {
            post,
            empty: PreparedDisc::empty(post),
            best,
        })
    }

    pub fn best_observed(&self) -> f64 {
        self.best
    }

    pub fn sample_values(&self, batch: &Batch, n_mc: usize, stream: NormalStream) -> Result<Vec<f64>> {
        let model = BatchModel::new(self.post, batch)?;
        let scene = Scene::build(&model, &self.empty);
        Ok(replicates(&scene, model.q(), n_mc, stream)
            .iter()
            .map(|r| (self.best - r.after_value).max(0.0))
            .collect())
    }

    pub fn value(&self, batch: &Batch, n_mc: usize, stream: NormalStream) -> Result<StochasticEstimate> {
        check_samples(n_mc)?;
        let samples = self.sample_values(batch, n_mc, stream)?;
        let (value, value_stderr) = mean_and_stderr(&samples);
        Ok(StochasticEstimate {
            value,
            value_stderr,
            gradient: None,
            gradient_stderr: None,
            n_mc,
            seed: stream.seed(),
        })
    }

    /// IPA gradient; samples with zero improvement contribute zero.
    pub fn gradient(&self, batch: &Batch, n_mc: usize, stream: NormalStream) -> Result<StochasticEstimate> {
        check_samples(n_mc)?;
        let model = BatchModel::new(self.post, batch)?;
        let scene = Scene::build(&model, &self.empty);
        let kit = GradientKit::new(&model)?;
        let q = model.q();
        let reps = replicates(&scene, q, n_mc, stream);
        let cache = cg_cache(&kit, &model, &self.empty, &scene, &reps);
        let mut acc = GradientAccumulator::new(q, self.post.dim());
        let mut samples = Vec::with_capacity(n_mc);
        for (m, r) in reps.iter().enumerate() {
            let improvement = self.best - r.after_value;
            if improvement > 0.0 {
                samples.push(improvement);
                let out = acc.scratch();
                kit.accumulate(&model, &scene, None, r.after, &cache[&r.after], &r.z, out);
                acc.commit(m)?;
            } else {
                samples.push(0.0);
                acc.commit_zero();
            }
        }
        let (value, value_stderr) = mean_and_stderr(&samples);
        let (gradient, gradient_stderr) = acc.finish(n_mc, q);
        Ok(StochasticEstimate {
            value,
            value_stderr,
            gradient: Some(gradient),
            gradient_stderr: Some(gradient_stderr),
            n_mc,
            seed: stream.seed(),
        })
    }
}

pub fn qei_value(post: &Posterior, batch: &Batch, n_mc: usize, seed: u64) -> Result<StochasticEstimate> {
    QeiProblem::new(post)?.value(batch, n_mc, NormalStream::Seeded(seed))
}

pub fn qei_gradient(post: &Posterior, batch: &Batch, n_mc: usize, seed: u64) -> Result<StochasticEstimate> {
    QeiProblem::new(post)?.gradient(batch, n_mc, NormalStream::Seeded(seed))
}

/// Posterior variances over a pool, conditioned on hallucinated noise-free
/// observations at selected pool points (mean untouched).
struct PoolConditioner {
    whitened: nalgebra::DMatrix<f64>,
    pool: Vec<Vec<f64>>,
    variance: Vec<f64>,
    /// Normalized columns of the partial Cholesky factor of the pool covariance.
    factors: Vec<DVector<f64>>,
}

impl PoolConditioner {
    fn new(post: &Posterior, pool: Vec<Vec<f64>>) -> Self {
        let whitened = post.whitened_cross_cov(&pool);
        let variance = pool
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let v = post.spec().signal_variance;
                if post.n() > 0 {
                    v - whitened.column(i).norm_squared()
                } else {
                    v
                }
            })
            .collect();
        Self {
            whitened,
            pool,
            variance,
            factors: Vec::new(),
        }
    }

    fn sd(&self, i: usize) -> f64 {
        self.variance[i].max(0.0).sqrt()
    }

    fn condition_on(&mut self, post: &Posterior, s: usize) {
        let spec = post.spec();
        let xs = self.pool[s].clone();
        let mut col = DVector::from_iterator(
            self.pool.len(),
            self.pool.iter().map(|x| crate::gp::matern52(x, &xs, spec)),
        );
        if post.n() > 0 {
            col -= self.whitened.tr_mul(&self.whitened.column(s));
        }
        for f in &self.factors {
            col.axpy(-f[s], f, 1.0);
        }
        let pivot = col[s];
        if pivot <= 1e-12 * spec.signal_variance {
            return;
        }
        col /= pivot.sqrt();
        for (v, c) in self.variance.iter_mut().zip(col.iter()) {
            *v -= c * c;
        }
        self.variance[s] = 0.0;
        self.factors.push(col);
    }
}

fn draw_pool<R: Rng + ?Sized>(domain: &BoxDomain, size: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..size).map(|_| domain.sample_uniform(rng)).collect()
}

fn lcb_argmin(cond: &PoolConditioner, means: &[f64], beta: f64) -> usize {
    let root = beta.sqrt();
    let scores: Vec<f64> = (0..means.len()).map(|i| means[i] - root * cond.sd(i)).collect();
    crate::sampling::argmin(&scores)
}

/// GP-BUCB over an explicit candidate pool.
pub fn gp_bucb_from_pool(post: &Posterior, q: usize, pool: Vec<Vec<f64>>, beta: f64) -> Result<Batch> {
    if pool.is_empty() || q == 0 {
        return Err(Error::InvalidArgument("empty pool or q = 0".into()));
    }
    let means: Vec<f64> = pool.iter().map(|x| post.mean(x)).collect();
    let mut cond = PoolConditioner::new(post, pool);
    let mut chosen = Vec::with_capacity(q);
    for _ in 0..q {
        let s = lcb_argmin(&cond, &means, beta);
        chosen.push(cond.pool[s].clone());
        cond.condition_on(post, s);
    }
    Batch::new(chosen)
}

/// GP-UCB-PE over an explicit candidate pool.
pub fn gp_ucb_pe_from_pool(post: &Posterior, q: usize, pool: Vec<Vec<f64>>, beta: f64) -> Result<Batch> {
    if pool.is_empty() || q == 0 {
        return Err(Error::InvalidArgument("empty pool or q = 0".into()));
    }
    let means: Vec<f64> = pool.iter().map(|x| post.mean(x)).collect();
    let mut cond = PoolConditioner::new(post, pool);
    let first = lcb_argmin(&cond, &means, beta);
    let mut chosen = vec![cond.pool[first].clone()];
    cond.condition_on(post, first);
    for _ in 1..q {
        let neg_sd: Vec<f64> = (0..cond.pool.len()).map(|i| -cond.sd(i)).collect();
        let s = crate::sampling::argmin(&neg_sd);
        chosen.push(cond.pool[s].clone());
        cond.condition_on(post, s);
    }
    Batch::new(chosen)
}

/// GP-BUCB: sequential LCB minimization with kernel-only hallucinated
/// conditioning on the points already chosen.
pub fn gp_bucb_select<R: Rng + ?Sized>(
    post: &Posterior,
    q: usize,
    config: &BaselineConfig,
    iteration: usize,
    domain: &BoxDomain,
    rng: &mut R,
) -> Result<Batch> {
    let pool = draw_pool(domain, config.candidate_pool_size, rng);
    let beta = config.beta_schedule.beta(iteration, config.candidate_pool_size);
    gp_bucb_from_pool(post, q, pool, beta)
}

/// GP-UCB-PE: first point by LCB, the rest by maximal conditioned variance.
pub fn gp_ucb_pe_select<R: Rng + ?Sized>(
    post: &Posterior,
    q: usize,
    config: &BaselineConfig,
    iteration: usize,
    domain: &BoxDomain,
    rng: &mut R,
) -> Result<Batch> {
    let pool = draw_pool(domain, config.candidate_pool_size, rng);
    let beta = config.beta_schedule.beta(iteration, config.candidate_pool_size);
    gp_ucb_pe_from_pool(post, q, pool, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Dataset, ModelSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fitted() -> Posterior {
        let spec = ModelSpec::isotropic(2, 1.0, 0.3);
        let data = Dataset::new(
            vec![vec![0.2, 0.3], vec![0.8, 0.5], vec![0.5, 0.9]],
            vec![0.4, -0.3, 0.1],
        )
        .unwrap();
        Posterior::new(data, spec).unwrap()
    }

    #[test]
    fn beta_schedule_is_nonnegative() {
        let b = BetaSchedule::Standard { delta: 0.1 };
        assert!(b.beta(1, 2000) > 0.0);
        assert!(b.beta(10, 2000) > b.beta(1, 2000));
        assert_eq!(BetaSchedule::Constant(-1.0).beta(3, 10), 0.0);
    }

    #[test]
    fn bucb_single_point_is_lcb_minimizer() {
        let post = fitted();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pool = draw_pool(&BoxDomain::unit(2), 300, &mut rng);
        let beta = 2.0;
        let b = gp_bucb_from_pool(&post, 1, pool.clone(), beta).unwrap();
        let best = pool
            .iter()
            .min_by(|a, c| {
                let la = post.mean(a) - beta.sqrt() * post.variance(a).max(0.0).sqrt();
                let lc = post.mean(c) - beta.sqrt() * post.variance(c).max(0.0).sqrt();
                la.partial_cmp(&lc).unwrap()
            })
            .unwrap();
        assert_eq!(&b.points()[0], best);
        let pe = gp_ucb_pe_from_pool(&post, 1, pool, beta).unwrap();
        assert_eq!(pe, b);
    }

    #[test]
    fn bucb_without_exploration_repeats_mean_minimizer() {
        let post = fitted();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pool = draw_pool(&BoxDomain::unit(2), 200, &mut rng);
        let b = gp_bucb_from_pool(&post, 3, pool, 0.0).unwrap();
        assert_eq!(b.points()[0], b.points()[1]);
        assert_eq!(b.points()[1], b.points()[2]);
    }

    #[test]
    fn conditioning_zeroes_selected_variance_and_never_increases() {
        let post = fitted();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pool = draw_pool(&BoxDomain::unit(2), 200, &mut rng);
        let mut cond = PoolConditioner::new(&post, pool);
        let before = cond.variance.clone();
        cond.condition_on(&post, 17);
        assert!(cond.sd(17) <= 1e-3);
        for (b, a) in before.iter().zip(&cond.variance) {
            assert!(*a <= *b + 1e-12);
        }
        // agrees with an explicit posterior update
        let hallucinated = {
            let mut pts = post.data().points().to_vec();
            pts.push(cond.pool[17].clone());
            let mut ys = post.data().values().to_vec();
            ys.push(0.0);
            Posterior::new(Dataset::new(pts, ys).unwrap(), post.spec().clone()).unwrap()
        };
        for i in [0, 5, 42, 199] {
            assert!((hallucinated.variance(&cond.pool[i]) - cond.variance[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn qei_is_nonnegative_and_needs_data() {
        let post = fitted();
        let batch = Batch::new(vec![vec![0.6, 0.4], vec![0.1, 0.1]]).unwrap();
        let v = qei_value(&post, &batch, 256, 4).unwrap();
        assert!(v.value >= 0.0);
        let empty = Posterior::new(Dataset::empty(), ModelSpec::isotropic(2, 1.0, 0.3)).unwrap();
        assert!(qei_value(&empty, &batch, 16, 0).is_err());
    }
}
