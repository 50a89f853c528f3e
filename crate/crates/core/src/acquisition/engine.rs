//! Shared Monte Carlo machinery for batch acquisitions built on the
//! reparameterization `μ⁽ⁿ⁺q⁾(x) = μ⁽ⁿ⁾(x) + σ̃(x)·Z_q`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::acquisition::{Batch, NormalStream};
use crate::error::{Error, Result};
use crate::gp::{cholesky_derivative, cholesky_with_jitter, matern52, Posterior};

const DUP_TOL: f64 = 1e-12;
const PERTURBATION: f64 = 1e-9;

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= DUP_TOL)
}

/// Discretization points that do not move with the batch, with their
/// posterior means and whitened cross-covariances cached.
pub(crate) struct PreparedDisc {
    pub points: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    /// `L⁻¹ K(X, points)`, `n × m`.
    pub whitened: DMatrix<f64>,
}

impl PreparedDisc {
    pub fn new(post: &Posterior, points: Vec<Vec<f64>>) -> Self {
        let mu = points.iter().map(|x| post.mean(x)).collect();
        let whitened = post.whitened_cross_cov(&points);
        Self {
            points,
            mu,
            whitened,
        }
    }

    pub fn empty(post: &Posterior) -> Self {
        Self::new(post, Vec::new())
    }
}

/// Posterior quantities attached to one candidate batch.
pub(crate) struct BatchModel<'a> {
    pub post: &'a Posterior,
    pub rows: Vec<Vec<f64>>,
    /// `D`: Cholesky factor of `K⁽ⁿ⁾(z, z) + diag σ²(z)`.
    pub chol: DMatrix<f64>,
    /// `L⁻¹ K(X, z)`, `n × q`.
    pub whitened: DMatrix<f64>,
    pub mu: Vec<f64>,
}

/// Separates rows closer than the duplicate tolerance.
fn separate_rows(post: &Posterior, mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let ls = &post.spec().length_scales;
    for i in 1..rows.len() {
        while (0..i).any(|k| same_point(&rows[i], &rows[k])) {
            for (v, l) in rows[i].iter_mut().zip(ls) {
                *v += PERTURBATION * l;
            }
        }
    }
    rows
}

impl<'a> BatchModel<'a> {
    pub fn new(post: &'a Posterior, batch: &Batch) -> Result<Self> {
        crate::error::dim_check(post.dim(), batch.dim(), "batch")?;
        let rows = separate_rows(post, batch.points().to_vec());
        let q = rows.len();
        let whitened = post.whitened_cross_cov(&rows);
        let mut kzz = DMatrix::zeros(q, q);
        for k in 0..q {
            for l in 0..=k {
                let mut v = matern52(&rows[k], &rows[l], post.spec());
                if post.n() > 0 {
                    v -= whitened.column(k).dot(&whitened.column(l));
                }
                kzz[(k, l)] = v;
                kzz[(l, k)] = v;
            }
            kzz[(k, k)] += post.spec().noise_at(&rows[k]);
        }
        let (chol, _) = cholesky_with_jitter(&kzz)?;
        let mu = rows.iter().map(|x| post.mean(x)).collect();
        Ok(Self {
            post,
            rows,
            chol,
            whitened,
            mu,
        })
    }

    pub fn q(&self) -> usize {
        self.rows.len()
    }

    /// `K⁽ⁿ⁾(z_k, x)` for all rows `k`, given `L⁻¹ K(X, x)`.
    pub fn kn(&self, x: &[f64], whitened_x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::from_iterator(
            self.q(),
            self.rows.iter().map(|z| matern52(z, x, self.post.spec())),
        );
        if self.post.n() > 0 {
            out -= self.whitened.tr_mul(whitened_x);
        }
        out
    }

    /// `σ̃(x)ᵀ = D⁻¹ K⁽ⁿ⁾(z, x)`.
    pub fn sigma_tilde(&self, kn: &DVector<f64>) -> DVector<f64> {
        self.chol
            .solve_lower_triangular(kn)
            .expect("batch factor has positive diagonal")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Member {
    Fixed(usize),
    Row(usize),
}

/// The discretization evaluated against one batch.
pub(crate) struct Scene {
    pub members: Vec<Member>,
    pub mu: Vec<f64>,
    /// Column `a` holds `σ̃(x_a)ᵀ`; `q × m`.
    pub st: DMatrix<f64>,
}

impl Scene {
    pub fn build(model: &BatchModel<'_>, fixed: &PreparedDisc) -> Self {
        let q = model.q();
        let mf = fixed.points.len();
        let mut members: Vec<Member> = (0..mf).map(Member::Fixed).collect();
        let mut mu = fixed.mu.clone();
        for (r, z) in model.rows.iter().enumerate() {
            if !fixed.points.iter().any(|p| same_point(p, z)) {
                members.push(Member::Row(r));
                mu.push(model.mu[r]);
            }
        }
        let m = members.len();
        let spec = model.post.spec();
        let mut kn = DMatrix::zeros(q, m);
        for (a, member) in members.iter().enumerate() {
            let x = match *member {
                Member::Fixed(i) => &fixed.points[i],
                Member::Row(r) => &model.rows[r],
            };
            for k in 0..q {
                kn[(k, a)] = matern52(&model.rows[k], x, spec);
            }
        }
        if model.post.n() > 0 {
            if mf > 0 {
                let corr = model.whitened.tr_mul(&fixed.whitened);
                kn.columns_mut(0, mf).zip_apply(&corr, |v, c| *v -= c);
            }
            for (a, member) in members.iter().enumerate().skip(mf) {
                if let Member::Row(r) = *member {
                    let corr = model.whitened.tr_mul(&model.whitened.column(r));
                    for k in 0..q {
                        kn[(k, a)] -= corr[k];
                    }
                }
            }
        }
        let st = model
            .chol
            .solve_lower_triangular(&kn)
            .expect("batch factor has positive diagonal");
        Self { members, mu, st }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    /// Lowest-index argmin of `μ` over the members accepted by `filter`.
    pub fn argmin_mean(&self, filter: impl Fn(Member) -> bool) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (a, m) in self.members.iter().enumerate() {
            if filter(*m) && best.is_none_or(|b| self.mu[a] < self.mu[b]) {
                best = Some(a);
            }
        }
        best
    }

    /// Lowest-index argmin of `μ + σ̃·z` and the minimum.
    pub fn argmin_after(&self, z: &DVector<f64>) -> (usize, f64) {
        let shift = self.st.tr_mul(z);
        let mut best = 0;
        let mut best_v = self.mu[0] + shift[0];
        for a in 1..self.len() {
            let v = self.mu[a] + shift[a];
            if v < best_v {
                best = a;
                best_v = v;
            }
        }
        (best, best_v)
    }
}

/// One Monte Carlo replicate: the draw and the index of the minimizer of the
/// updated mean.
pub(crate) struct Replicate {
    pub z: DVector<f64>,
    pub after: usize,
    pub after_value: f64,
}

pub(crate) fn replicates(scene: &Scene, q: usize, n_mc: usize, stream: NormalStream) -> Vec<Replicate> {
    (0..n_mc)
        .into_par_iter()
        .map(|m| {
            let z = stream.draw(m, q);
            let (after, after_value) = scene.argmin_after(&z);
            Replicate {
                z,
                after,
                after_value,
            }
        })
        .collect()
}

/// Derivative ingredients with respect to every batch coordinate `z_ij`.
pub(crate) struct GradientKit {
    d: usize,
    mu_grad: Vec<Vec<f64>>,
    /// `[i][k]`: `∂K⁽ⁿ⁾(z_i, z_k)/∂z_i`.
    cg_rows: Vec<Vec<Vec<f64>>>,
    /// `[i][j]`: `∂D/∂z_ij`.
    dchol: Vec<Vec<DMatrix<f64>>>,
}

impl GradientKit {
    pub fn new(model: &BatchModel<'_>) -> Result<Self> {
        let post = model.post;
        let q = model.q();
        let d = post.dim();
        let solved: Vec<DVector<f64>> = (0..q)
            .map(|k| {
                if post.n() == 0 {
                    DVector::zeros(0)
                } else {
                    post.chol_factor()
                        .tr_solve_lower_triangular(&model.whitened.column(k).into_owned())
                        .expect("posterior factor has positive diagonal")
                }
            })
            .collect();
        let cg_rows: Vec<Vec<Vec<f64>>> = (0..q)
            .map(|i| {
                (0..q)
                    .map(|k| post.cov_grad_x1_with(&model.rows[i], &model.rows[k], &solved[k]))
                    .collect()
            })
            .collect();
        let mut dchol = Vec::with_capacity(q);
        for i in 0..q {
            let mut per_dim = Vec::with_capacity(d);
            for j in 0..d {
                let mut da = DMatrix::zeros(q, q);
                for k in 0..q {
                    da[(i, k)] += cg_rows[i][k][j];
                    da[(k, i)] += cg_rows[i][k][j];
                }
                per_dim.push(cholesky_derivative(&model.chol, &da)?);
            }
            dchol.push(per_dim);
        }
        Ok(Self {
            d,
            mu_grad: model.rows.iter().map(|z| post.mean_grad(z)).collect(),
            cg_rows,
            dchol,
        })
    }

    /// `∂K⁽ⁿ⁾(z_i, x_a)/∂z_i` for every row `i`.
    pub fn cg_to(&self, model: &BatchModel<'_>, fixed: &PreparedDisc, member: Member) -> Vec<Vec<f64>> {
        match member {
            Member::Row(r) => self.cg_rows.iter().map(|per_k| per_k[r].clone()).collect(),
            Member::Fixed(idx) => {
                let post = model.post;
                let x = &fixed.points[idx];
                let solved = if post.n() == 0 {
                    DVector::zeros(0)
                } else {
                    post.chol_factor()
                        .tr_solve_lower_triangular(&fixed.whitened.column(idx).into_owned())
                        .expect("posterior factor has positive diagonal")
                };
                model
                    .rows
                    .iter()
                    .map(|z| post.cov_grad_x1_with(z, x, &solved))
                    .collect()
            }
        }
    }

    /// Adds `∂/∂z [μ(x_before) − μ(x_after) − σ̃(x_after)·Z]` to `out`
    /// (row-major `q × d`). `before` is `None` when the first term is a
    /// constant.
    #[allow(clippy::too_many_arguments)]
    pub fn accumulate(
        &self,
        model: &BatchModel<'_>,
        scene: &Scene,
        before: Option<Member>,
        after: usize,
        cg_after: &[Vec<f64>],
        z: &DVector<f64>,
        out: &mut [f64],
    ) {
        let q = model.q();
        let d = self.d;
        let u = model
            .chol
            .tr_solve_lower_triangular(z)
            .expect("batch factor has positive diagonal");
        let st = scene.st.column(after);
        let after_member = scene.members[after];
        for i in 0..q {
            let is_after = after_member == Member::Row(i);
            let is_before = before == Some(Member::Row(i));
            for j in 0..d {
                let mut dk_u = u[i] * cg_after[i][j];
                if is_after {
                    for k in 0..q {
                        dk_u += u[k] * self.cg_rows[i][k][j];
                    }
                }
                let dd = &self.dchol[i][j];
                let mut u_dd_st = 0.0;
                for l in 0..q {
                    let mut row = 0.0;
                    for k in 0..=l {
                        row += dd[(l, k)] * st[k];
                    }
                    u_dd_st += u[l] * row;
                }
                let mut g = -(dk_u - u_dd_st);
                if is_before {
                    g += self.mu_grad[i][j];
                }
                if is_after {
                    g -= self.mu_grad[i][j];
                }
                out[i * d + j] += g;
            }
        }
    }
}

/// Caches `cg_to` per distinct minimizer across replicates.
pub(crate) fn cg_cache(
    kit: &GradientKit,
    model: &BatchModel<'_>,
    fixed: &PreparedDisc,
    scene: &Scene,
    reps: &[Replicate],
) -> BTreeMap<usize, Vec<Vec<f64>>> {
    let mut cache = BTreeMap::new();
    for r in reps {
        cache
            .entry(r.after)
            .or_insert_with(|| kit.cg_to(model, fixed, scene.members[r.after]));
    }
    cache
}

/// Per-entry mean and standard error of per-sample gradients.
pub(crate) struct GradientAccumulator {
    q: usize,
    d: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    scratch: Vec<f64>,
}

impl GradientAccumulator {
    pub fn new(q: usize, d: usize) -> Self {
        Self {
            q,
            d,
            sum: vec![0.0; q * d],
            sum_sq: vec![0.0; q * d],
            scratch: vec![0.0; q * d],
        }
    }

    pub fn scratch(&mut self) -> &mut [f64] {
        self.scratch.iter_mut().for_each(|v| *v = 0.0);
        &mut self.scratch
    }

    pub fn commit(&mut self, index: usize) -> Result<()> {
        if self.scratch.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient at MC sample {index}"
            )));
        }
        for ((s, s2), v) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(&self.scratch) {
            *s += v;
            *s2 += v * v;
        }
        Ok(())
    }

    /// Records a sample whose gradient is identically zero.
    pub fn commit_zero(&mut self) {}

    pub fn finish(&self, n: usize, rows: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let nf = n as f64;
        let mut mean = Vec::with_capacity(rows);
        let mut se = Vec::with_capacity(rows);
        for i in 0..rows.min(self.q) {
            let mut mrow = Vec::with_capacity(self.d);
            let mut srow = Vec::with_capacity(self.d);
            for j in 0..self.d {
                let k = i * self.d + j;
                let m = self.sum[k] / nf;
                let var = ((self.sum_sq[k] - nf * m * m) / (nf - 1.0)).max(0.0);
                mrow.push(m);
                srow.push((var / nf).sqrt());
            }
            mean.push(mrow);
            se.push(srow);
        }
        (mean, se)
    }
}
