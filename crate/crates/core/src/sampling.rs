//! Initial designs and the evolving discretization used by the q-KG inner
//! minimization.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::acquisition::Batch;
use crate::error::{Error, Result};
use crate::gp::{cholesky_with_jitter, Posterior};

/// Default number of pool points per joint posterior draw.
pub const DEFAULT_POOL_SIZE: usize = 500;
/// Replicates sharing one candidate pool.
pub const REPLICATES_PER_POOL: usize = 100;
const MIN_POOL_SIZE: usize = 16;
const DEDUP_TOL: f64 = 1e-12;

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "box bounds of lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite())
        {
            return Err(Error::InvalidArgument("box needs lower < upper".into()));
        }
        Ok(Self { lower, upper })
    }

    /// `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn mean_width(&self) -> f64 {
        (0..self.dim()).map(|j| self.width(j)).sum::<f64>() / self.dim() as f64
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Coordinate-wise clamp into the box.
    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                let v = l + (u - l) * rng.random::<f64>();
                v.min(*u)
            })
            .collect()
    }

    /// The box `self^q`, coordinates of the q copies concatenated.
    pub fn power(&self, q: usize) -> Self {
        Self {
            lower: self.lower.repeat(q),
            upper: self.upper.repeat(q),
        }
    }
}

/// Where a discretization point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    PosteriorMinimumSample,
    PastObservation,
    CandidateBatch,
}

/// Finite set over which the inner minima of q-KG are taken.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscreteSet {
    points: Vec<Vec<f64>>,
    provenance: Vec<Provenance>,
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= DEDUP_TOL)
}

impl DiscreteSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Index of an existing point within the duplicate tolerance.
    pub fn find(&self, x: &[f64]) -> Option<usize> {
        self.points.iter().position(|p| same_point(p, x))
    }

    /// Appends `x` unless a duplicate is already present. Returns the index
    /// holding the point.
    pub fn insert(&mut self, x: Vec<f64>, tag: Provenance) -> usize {
        if let Some(i) = self.find(&x) {
            return i;
        }
        self.points.push(x);
        self.provenance.push(tag);
        self.points.len() - 1
    }

    pub fn extend(&mut self, xs: impl IntoIterator<Item = Vec<f64>>, tag: Provenance) {
        for x in xs {
            self.insert(x, tag);
        }
    }

    /// Copy without the candidate-batch entries.
    pub fn without_candidates(&self) -> Self {
        let mut out = Self::new();
        for (p, t) in self.points.iter().zip(&self.provenance) {
            if *t != Provenance::CandidateBatch {
                out.points.push(p.clone());
                out.provenance.push(*t);
            }
        }
        out
    }

    /// Replaces the candidate-batch entries by the rows of `batch`.
    pub fn with_batch(&self, batch: &Batch) -> Self {
        let mut out = self.without_candidates();
        out.extend(batch.points().iter().cloned(), Provenance::CandidateBatch);
        out
    }
}

/// Latin hypercube design of `count` points in `domain`.
pub fn latin_hypercube<R: Rng + ?Sized>(
    count: usize,
    domain: &BoxDomain,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if count < 1 {
        return Err(Error::InvalidArgument("latin_hypercube needs count >= 1".into()));
    }
    let d = domain.dim();
    let mut out = vec![vec![0.0; d]; count];
    let mut perm: Vec<usize> = (0..count).collect();
    for j in 0..d {
        // Fisher-Yates
        for i in (1..count).rev() {
            let k = rng.random_range(0..=i);
            perm.swap(i, k);
        }
        let (lo, w) = (domain.lower[j], domain.width(j));
        for (i, row) in out.iter_mut().enumerate() {
            let u = (perm[i] as f64 + rng.random::<f64>()) / count as f64;
            row[j] = (lo + w * u).min(domain.upper[j]);
        }
    }
    Ok(out)
}

/// Approximate samples of the posterior global minimizer.
///
/// Each replicate draws one joint posterior sample over a pool of uniform
/// points and returns the pool point attaining its minimum. Pools are shared
/// by groups of [`REPLICATES_PER_POOL`] replicates; each group has its own
/// substream of a master seed drawn from `rng`, so the output does not depend
/// on how groups are scheduled.
pub fn sample_posterior_minima<R: Rng + ?Sized>(
    post: &Posterior,
    m: usize,
    pool_size: usize,
    domain: &BoxDomain,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if m < 1 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    if pool_size < m.min(REPLICATES_PER_POOL).max(2) {
        return Err(Error::InvalidArgument(format!(
            "pool_size {pool_size} too small for {m} samples"
        )));
    }
    crate::error::dim_check(domain.dim(), post.dim(), "sample_posterior_minima")?;
    let master: u64 = rng.random();
    let groups = m.div_ceil(REPLICATES_PER_POOL);
    let mut out = Vec::with_capacity(m);
    for g in 0..groups {
        let mut grng = ChaCha8Rng::seed_from_u64(master);
        grng.set_stream(g as u64);
        let reps = REPLICATES_PER_POOL.min(m - g * REPLICATES_PER_POOL);
        out.extend(minima_on_pool(post, reps, pool_size, domain, &mut grng)?);
    }
    Ok(out)
}

fn minima_on_pool(
    post: &Posterior,
    reps: usize,
    pool_size: usize,
    domain: &BoxDomain,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    let mut size = pool_size;
    loop {
        let pool: Vec<Vec<f64>> = (0..size).map(|_| domain.sample_uniform(rng)).collect();
        let cov = post.cov_matrix(&pool);
        match cholesky_with_jitter(&cov) {
            Ok((l, _)) => {
                let mean = DVector::from_iterator(size, pool.iter().map(|x| post.mean(x)));
                let mut out = Vec::with_capacity(reps);
                for _ in 0..reps {
                    let xi = DVector::from_iterator(
                        size,
                        (0..size).map(|_| StandardNormal.sample(&mut *rng)),
                    );
                    let draw = &mean + &l * xi;
                    out.push(pool[argmin(draw.as_slice())].clone());
                }
                return Ok(out);
            }
            Err(e) if size / 2 < MIN_POOL_SIZE => return Err(e),
            Err(_) => size /= 2,
        }
    }
}

/// Lowest index among the minimal entries.
pub(crate) fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// `A_n = A_n^M ∪ x^{1:n} ∪ z^{1:q}` with near-duplicates removed.
pub fn build_discretization<R: Rng + ?Sized>(
    post: &Posterior,
    batch: &Batch,
    m: usize,
    pool_size: usize,
    domain: &BoxDomain,
    rng: &mut R,
) -> Result<DiscreteSet> {
    let mut set = DiscreteSet::new();
    if m > 0 {
        let minima = sample_posterior_minima(post, m, pool_size, domain, rng)?;
        set.extend(minima, Provenance::PosteriorMinimumSample);
    }
    set.extend(post.data().points().iter().cloned(), Provenance::PastObservation);
    set.extend(batch.points().iter().cloned(), Provenance::CandidateBatch);
    Ok(set)
}
