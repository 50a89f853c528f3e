use nalgebra::{DMatrix, DVector};

use crate::error::{dim_check, Error, Result};
use crate::gp::cholesky::cholesky_with_jitter;
use crate::gp::kernel::{matern52, matern52_grad_x1};
use crate::gp::{Dataset, ModelSpec};

/// GP conditioned on a [`Dataset`].
///
/// Holds the lower Cholesky factor `L` of `K(X,X) + σ²I + jitter·I` and the
/// weights `α = (LLᵀ)⁻¹ (y − μ)`. Immutable once built.
#[derive(Debug, Clone)]
pub struct Posterior {
    spec: ModelSpec,
    data: Dataset,
    chol: DMatrix<f64>,
    weights: DVector<f64>,
    jitter: f64,
}

pub fn build_posterior(data: &Dataset, spec: &ModelSpec) -> Result<Posterior> {
    Posterior::new(data.clone(), spec.clone())
}

impl Posterior {
    pub fn new(data: Dataset, spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let n = data.len();
        let d = spec.dim();
        if let Some(p) = data.points().first() {
            dim_check(d, p.len(), "build_posterior")?;
        }
        let pts = data.points();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = matern52(&pts[i], &pts[j], &spec);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += spec.noise_at(&pts[i]);
        }
        let (chol, jitter) = cholesky_with_jitter(&k).map_err(|e| match e {
            Error::Numerical(msg) => Error::Numerical(format!("posterior factorization: {msg}")),
            other => other,
        })?;
        let resid = DVector::from_iterator(n, data.values().iter().map(|y| y - spec.mean_const));
        let weights = solve_spd(&chol, &resid);
        Ok(Self {
            spec,
            data,
            chol,
            weights,
            jitter,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn chol_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    /// `K(X, x)`.
    pub fn cross_cov(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.n(),
            self.data.points().iter().map(|p| matern52(p, x, &self.spec)),
        )
    }

    /// `L⁻¹ v`.
    pub fn solve_lower(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.n() == 0 {
            return DVector::zeros(0);
        }
        self.chol
            .solve_lower_triangular(v)
            .expect("posterior factor has positive diagonal")
    }

    /// `(LLᵀ)⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        solve_spd(&self.chol, v)
    }

    /// `L⁻¹ K(X, points)` as an `n × m` matrix.
    pub fn whitened_cross_cov(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = self.n();
        let mut k = DMatrix::zeros(n, points.len());
        for (c, x) in points.iter().enumerate() {
            for (r, p) in self.data.points().iter().enumerate() {
                k[(r, c)] = matern52(p, x, &self.spec);
            }
        }
        if n == 0 {
            return k;
        }
        self.chol
            .solve_lower_triangular(&k)
            .expect("posterior factor has positive diagonal")
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        let mut m = self.spec.mean_const;
        for (p, w) in self.data.points().iter().zip(self.weights.iter()) {
            m += w * matern52(p, x, &self.spec);
        }
        m
    }

    pub fn cov(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let prior = matern52(x1, x2, &self.spec);
        if self.n() == 0 {
            return prior;
        }
        let v1 = self.solve_lower(&self.cross_cov(x1));
        let v2 = self.solve_lower(&self.cross_cov(x2));
        prior - v1.dot(&v2)
    }

    pub fn variance(&self, x: &[f64]) -> f64 {
        self.cov(x, x)
    }

    /// Gradient of the posterior mean.
    pub fn mean_grad(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut g = vec![0.0; d];
        let mut kg = vec![0.0; d];
        for (p, w) in self.data.points().iter().zip(self.weights.iter()) {
            matern52_grad_x1(x, p, &self.spec, &mut kg);
            for j in 0..d {
                g[j] += w * kg[j];
            }
        }
        g
    }

    /// `∂K⁽ⁿ⁾(x1, x2)/∂x1` given the precomputed `(LLᵀ)⁻¹ K(X, x2)`.
    pub fn cov_grad_x1_with(&self, x1: &[f64], x2: &[f64], solved_x2: &DVector<f64>) -> Vec<f64> {
        let d = self.dim();
        let mut g = vec![0.0; d];
        matern52_grad_x1(x1, x2, &self.spec, &mut g);
        let mut kg = vec![0.0; d];
        for (p, w) in self.data.points().iter().zip(solved_x2.iter()) {
            matern52_grad_x1(x1, p, &self.spec, &mut kg);
            for j in 0..d {
                g[j] -= w * kg[j];
            }
        }
        g
    }

    /// `∂K⁽ⁿ⁾(x1, x2)/∂x1`.
    pub fn cov_grad_x1(&self, x1: &[f64], x2: &[f64]) -> Vec<f64> {
        let solved = self.solve(&self.cross_cov(x2));
        self.cov_grad_x1_with(x1, x2, &solved)
    }

    /// Posterior covariance matrix over `points`.
    pub fn cov_matrix(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let m = points.len();
        let mut c = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = matern52(&points[i], &points[j], &self.spec);
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        if self.n() > 0 {
            let v = self.whitened_cross_cov(points);
            c -= v.transpose() * v;
        }
        c
    }

    fn check(&self, x: &[f64], what: &str) -> Result<()> {
        dim_check(self.dim(), x.len(), what)
    }
}

fn solve_spd(chol: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    if chol.nrows() == 0 {
        return DVector::zeros(0);
    }
    let w = chol
        .solve_lower_triangular(v)
        .expect("factor has positive diagonal");
    chol.tr_solve_lower_triangular(&w)
        .expect("factor has positive diagonal")
}

pub fn posterior_mean(post: &Posterior, x: &[f64]) -> Result<f64> {
    post.check(x, "posterior_mean")?;
    Ok(post.mean(x))
}

pub fn posterior_cov(post: &Posterior, x1: &[f64], x2: &[f64]) -> Result<f64> {
    post.check(x1, "posterior_cov x1")?;
    post.check(x2, "posterior_cov x2")?;
    Ok(post.cov(x1, x2))
}

pub fn posterior_mean_grad(post: &Posterior, x: &[f64]) -> Result<Vec<f64>> {
    post.check(x, "posterior_mean_grad")?;
    Ok(post.mean_grad(x))
}
