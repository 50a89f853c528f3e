//! Multi-start projected stochastic gradient ascent over `box^q`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::acquisition::{Batch, StochasticEstimate};
use crate::error::{Error, Result};
use crate::sampling::{latin_hypercube, BoxDomain};

/// Largest displacement per coordinate and step, as a fraction of the box
/// width.
pub const MAX_STEP_FRACTION: f64 = 0.1;

/// Step sizes `γ_t = a / (offset + t)^alpha`, `t = 1, 2, ...`.
///
/// For `alpha ∈ (0.5, 1]` the series `Σγ_t` diverges and `Σγ_t²` converges
/// (p-series), which is what the constructor enforces.
#[derive(Debug, Clone, PartialEq)]
pub struct SgaSchedule {
    pub a: f64,
    pub offset: f64,
    pub alpha: f64,
    pub max_steps: usize,
    pub n_starts: usize,
}

impl SgaSchedule {
    pub fn new(a: f64, offset: f64, alpha: f64, max_steps: usize, n_starts: usize) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidArgument(format!("step base must be positive, got {a}")));
        }
        if !(offset >= 0.0) || !offset.is_finite() {
            return Err(Error::InvalidArgument(format!("offset must be >= 0, got {offset}")));
        }
        if !(alpha > 0.5 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "decay exponent must lie in (0.5, 1], got {alpha}"
            )));
        }
        if n_starts == 0 {
            return Err(Error::InvalidArgument("need at least one start".into()));
        }
        Ok(Self {
            a,
            offset,
            alpha,
            max_steps,
            n_starts,
        })
    }

    /// Defaults scaled to `domain`: `a = 0.3·mean width`, `offset = 10`,
    /// `alpha = 0.7`, 100 steps, 8 starts.
    pub fn for_domain(domain: &BoxDomain) -> Self {
        Self {
            a: 0.3 * domain.mean_width(),
            offset: 10.0,
            alpha: 0.7,
            max_steps: 100,
            n_starts: 8,
        }
    }

    pub fn step_size(&self, t: usize) -> f64 {
        self.a / (self.offset + t as f64).powf(self.alpha)
    }
}

/// Coordinate-wise clamp of every row into `domain`.
pub fn project_to_box(z: &[Vec<f64>], domain: &BoxDomain) -> Vec<Vec<f64>> {
    z.iter()
        .map(|row| {
            let mut r = row.clone();
            domain.clamp(&mut r);
            r
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrajectoryReport {
    pub start: Batch,
    pub end: Batch,
    /// Common-random-number value of `end`; `None` if the trajectory failed.
    pub end_value: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SgaOutcome {
    pub best: Batch,
    pub best_value: f64,
    pub winner_seed: u64,
    pub trajectories: Vec<TrajectoryReport>,
}

fn ascend<G>(
    grad_fn: &G,
    start: &Batch,
    domain: &BoxDomain,
    schedule: &SgaSchedule,
    seed: u64,
) -> Result<Batch>
where
    G: Fn(&Batch, u64) -> Result<StochasticEstimate>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = start.points().to_vec();
    let d = domain.dim();
    for t in 1..=schedule.max_steps {
        let est = grad_fn(&Batch::new(z.clone())?, rng.random())?;
        let grad = est.gradient()?;
        let gamma = schedule.step_size(t);
        for (row, grow) in z.iter_mut().zip(grad) {
            for j in 0..d {
                let w = domain.width(j);
                let cap = MAX_STEP_FRACTION * w;
                let step = (gamma * w * grow[j]).clamp(-cap, cap);
                row[j] += step;
            }
            domain.clamp(row);
        }
        if z.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite iterate at step {t}")));
        }
    }
    Batch::new(z)
}

/// Maximizes a stochastic acquisition over `box^q`.
///
/// Runs `schedule.n_starts` independent trajectories from a Latin hypercube
/// over `box^q`, each taking `z ← Π(z + γ_t·w∘∇)` with the displacement capped
/// at [`MAX_STEP_FRACTION`] of the width. Final iterates are compared with
/// `value_fn` under one shared seed; the highest wins (lowest index on ties).
pub fn sga_maximize<G, V, R>(
    grad_fn: G,
    value_fn: V,
    domain: &BoxDomain,
    q: usize,
    schedule: &SgaSchedule,
    rng: &mut R,
) -> Result<SgaOutcome>
where
    G: Fn(&Batch, u64) -> Result<StochasticEstimate> + Sync,
    V: Fn(&Batch, u64) -> Result<StochasticEstimate> + Sync,
    R: Rng + ?Sized,
{
    if q == 0 {
        return Err(Error::InvalidArgument("q must be >= 1".into()));
    }
    let d = domain.dim();
    let flat = latin_hypercube(schedule.n_starts, &domain.power(q), rng)?;
    let starts: Vec<Batch> = flat
        .into_iter()
        .map(|v| Batch::new(v.chunks(d).map(|c| c.to_vec()).collect()))
        .collect::<Result<_>>()?;
    let master: u64 = rng.random();
    let winner_seed: u64 = rng.random();
    let ends: Vec<Result<Batch>> = starts
        .par_iter()
        .enumerate()
        .map(|(k, start)| {
            let mut srng = ChaCha8Rng::seed_from_u64(master);
            srng.set_stream(k as u64);
            ascend(&grad_fn, start, domain, schedule, srng.random())
        })
        .collect();
    let mut trajectories = Vec::with_capacity(starts.len());
    let mut best: Option<(usize, f64)> = None;
    for (k, (start, end)) in starts.into_iter().zip(ends).enumerate() {
        let (end, end_value) = match end {
            Ok(b) => match value_fn(&b, winner_seed) {
                Ok(est) if est.value.is_finite() => (b, Some(est.value)),
                _ => (b, None),
            },
            Err(_) => (start.clone(), None),
        };
        if let Some(v) = end_value {
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((k, v));
            }
        }
        trajectories.push(TrajectoryReport {
            start,
            end,
            end_value,
        });
    }
    let (k, best_value) =
        best.ok_or_else(|| Error::Numerical("every SGA trajectory failed".into()))?;
    Ok(SgaOutcome {
        best: trajectories[k].end.clone(),
        best_value,
        winner_seed,
        trajectories,
    })
}
