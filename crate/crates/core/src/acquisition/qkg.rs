//! Parallel knowledge gradient over a finite discretization.
//!
//! For a batch `z` and a draw `Z ~ N(0, I_q)`:
//!
//! ```text
//! g(z, A, Z) = min_{x∈A} μ⁽ⁿ⁾(x) − min_{x∈A} (μ⁽ⁿ⁾(x) + σ̃(x, z)·Z)
//! σ̃(x, z)    = K⁽ⁿ⁾(x, z) (Dᵀ)⁻¹,   D Dᵀ = K⁽ⁿ⁾(z, z) + diag σ²(z)
//! ```
//!
//! q-KG is `E[g]`. The gradient estimator differentiates `g` pathwise with
//! both minimizers held fixed.

use nalgebra::DVector;

use crate::acquisition::engine::{
    cg_cache, replicates, BatchModel, GradientAccumulator, GradientKit, Member, PreparedDisc,
    Scene,
};
use crate::acquisition::{check_samples, mean_and_stderr, Batch, NormalStream, StochasticEstimate};
use crate::error::{dim_check, Error, Result};
use crate::gp::Posterior;
use crate::sampling::DiscreteSet;

/// Set over which the current (pre-batch) minimum of the mean is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BeforeSet {
    /// The whole discretization, batch rows included.
    #[default]
    Full,
    /// Only the points that do not move with the batch. With a noise-free
    /// posterior and a discretization of past observations this turns q-KG
    /// into parallel expected improvement.
    ExcludeCandidates,
}

/// One evaluation of the inner function `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSample {
    pub value: f64,
    pub x_before: Vec<f64>,
    pub x_after: Vec<f64>,
}

/// q-KG for a fixed posterior and discretization, evaluated at many batches.
///
/// Candidate-batch entries of the discretization are dropped on
/// construction; the rows of each evaluated batch are appended instead.
pub struct QkgProblem<'a> {
    post: &'a Posterior,
    fixed: PreparedDisc,
    before_set: BeforeSet,
}

struct Evaluation<'p, 'a> {
    model: BatchModel<'a>,
    scene: Scene,
    before: usize,
    problem: &'p QkgProblem<'a>,
}

impl<'a> QkgProblem<'a> {
    pub fn new(post: &'a Posterior, disc: &DiscreteSet) -> Self {
        let points = disc.without_candidates().points().to_vec();
        Self {
            post,
            fixed: PreparedDisc::new(post, points),
            before_set: BeforeSet::Full,
        }
    }

    pub fn with_before_set(mut self, before_set: BeforeSet) -> Self {
        self.before_set = before_set;
        self
    }

    pub fn posterior(&self) -> &Posterior {
        self.post
    }

    fn evaluate<'p>(&'p self, batch: &Batch) -> Result<Evaluation<'p, 'a>> {
        let model = BatchModel::new(self.post, batch)?;
        let scene = Scene::build(&model, &self.fixed);
        let before = match self.before_set {
            BeforeSet::Full => scene.argmin_mean(|_| true),
            BeforeSet::ExcludeCandidates => scene
                .argmin_mean(|m| matches!(m, Member::Fixed(_)))
                .or_else(|| scene.argmin_mean(|_| true)),
        }
        .expect("scene holds at least the batch rows");
        Ok(Evaluation {
            model,
            scene,
            before,
            problem: self,
        })
    }

    /// `g` for one explicit draw `zq`.
    pub fn inner_g(&self, batch: &Batch, zq: &[f64]) -> Result<InnerSample> {
        dim_check(batch.q(), zq.len(), "Z_q")?;
        let ev = self.evaluate(batch)?;
        let (after, after_value) = ev.scene.argmin_after(&DVector::from_column_slice(zq));
        Ok(InnerSample {
            value: ev.scene.mu[ev.before] - after_value,
            x_before: ev.point(ev.before),
            x_after: ev.point(after),
        })
    }

    /// Per-replicate values of `g`, in replicate order.
    pub fn sample_values(&self, batch: &Batch, n_mc: usize, stream: NormalStream) -> Result<Vec<f64>> {
        let ev = self.evaluate(batch)?;
        let before = ev.scene.mu[ev.before];
        Ok(replicates(&ev.scene, ev.model.q(), n_mc, stream)
            .iter()
            .map(|r| before - r.after_value)
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

    pub fn gradient(&self, batch: &Batch, n_mc: usize, stream: NormalStream) -> Result<StochasticEstimate> {
        self.partial_gradient(batch, batch.q(), n_mc, stream)
    }

    /// Value and the gradient with respect to the first `rows` batch rows.
    pub fn partial_gradient(
        &self,
        batch: &Batch,
        rows: usize,
        n_mc: usize,
        stream: NormalStream,
    ) -> Result<StochasticEstimate> {
        check_samples(n_mc)?;
        let ev = self.evaluate(batch)?;
        let kit = GradientKit::new(&ev.model)?;
        let q = ev.model.q();
        let reps = replicates(&ev.scene, q, n_mc, stream);
        let cache = cg_cache(&kit, &ev.model, &self.fixed, &ev.scene, &reps);
        let before_value = ev.scene.mu[ev.before];
        let before_member = Some(ev.scene.members[ev.before]);
        let mut acc = GradientAccumulator::new(q, self.post.dim());
        let mut samples = Vec::with_capacity(n_mc);
        for (m, r) in reps.iter().enumerate() {
            samples.push(before_value - r.after_value);
            let out = acc.scratch();
            kit.accumulate(
                &ev.model,
                &ev.scene,
                before_member,
                r.after,
                &cache[&r.after],
                &r.z,
                out,
            );
            acc.commit(m)?;
        }
        let (value, value_stderr) = mean_and_stderr(&samples);
        if !value.is_finite() {
            return Err(Error::Numerical("non-finite q-KG value".into()));
        }
        let (gradient, gradient_stderr) = acc.finish(n_mc, rows);
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

impl Evaluation<'_, '_> {
    fn point(&self, a: usize) -> Vec<f64> {
        match self.scene.members[a] {
            Member::Fixed(i) => self.problem.fixed.points[i].clone(),
            Member::Row(r) => self.model.rows[r].clone(),
        }
    }
}

/// `σ̃(x, z) = K⁽ⁿ⁾(x, z) (Dᵀ)⁻¹` as a length-`q` vector.
pub fn sigma_tilde(post: &Posterior, batch: &Batch, x: &[f64]) -> Result<Vec<f64>> {
    dim_check(post.dim(), x.len(), "sigma_tilde x")?;
    let model = BatchModel::new(post, batch)?;
    let wx = post.solve_lower(&post.cross_cov(x));
    Ok(model.sigma_tilde(&model.kn(x, &wx)).as_slice().to_vec())
}

/// `g(z, A, Z_q)` and the two minimizers.
pub fn sample_inner_g(
    post: &Posterior,
    batch: &Batch,
    disc: &DiscreteSet,
    zq: &[f64],
) -> Result<InnerSample> {
    QkgProblem::new(post, disc).inner_g(batch, zq)
}

pub fn qkg_value(
    post: &Posterior,
    batch: &Batch,
    disc: &DiscreteSet,
    n_mc: usize,
    seed: u64,
) -> Result<StochasticEstimate> {
    QkgProblem::new(post, disc).value(batch, n_mc, NormalStream::Seeded(seed))
}

pub fn qkg_gradient(
    post: &Posterior,
    batch: &Batch,
    disc: &DiscreteSet,
    n_mc: usize,
    seed: u64,
) -> Result<StochasticEstimate> {
    QkgProblem::new(post, disc).gradient(batch, n_mc, NormalStream::Seeded(seed))
}

/// q-KG of `new_batch` stacked over `pending` points still under
/// evaluation; the gradient covers the `new_batch` rows only. Pending
/// locations join the discretization as candidates.
pub fn qkg_async(
    post: &Posterior,
    new_batch: &Batch,
    pending: &[Vec<f64>],
    disc: &DiscreteSet,
    n_mc: usize,
    seed: u64,
) -> Result<StochasticEstimate> {
    let stacked = if pending.is_empty() {
        new_batch.clone()
    } else {
        new_batch.stack(&Batch::new(pending.to_vec())?)?
    };
    QkgProblem::new(post, disc).partial_gradient(
        &stacked,
        new_batch.q(),
        n_mc,
        NormalStream::Seeded(seed),
    )
}
