//! Maximum-likelihood fitting of the kernel and noise hyperparameters.
//!
//! Positive parameters are optimized in log space by multi-start projected
//! gradient ascent with Barzilai-Borwein steps and Armijo backtracking. The
//! constant mean is profiled out in closed form (generalized least squares).

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gp::cholesky::cholesky_with_jitter;
use crate::gp::{Dataset, ModelSpec};
use crate::sampling::BoxDomain;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const SQRT5: f64 = 2.236_067_977_499_79;
const MAX_ITERS: usize = 300;
const STALL_WINDOW: usize = 10;
/// Log-likelihood gain over `STALL_WINDOW` iterations below which a
/// start is considered converged; far below any meaningful difference.
const STALL_TOL: f64 = 1e-3;

/// Box constraints on the hyperparameters (natural units).
#[derive(Debug, Clone, PartialEq)]
pub struct HyperBounds {
    pub length_scales: Vec<(f64, f64)>,
    pub signal_variance: (f64, f64),
    pub noise_variance: (f64, f64),
}

impl HyperBounds {
    /// Default bounds derived from the data spread and the domain widths.
    pub fn for_data(data: &Dataset, domain: &BoxDomain) -> Self {
        let var = data.value_variance();
        // constant or single-valued data has no usable scale
        let scale = if data.len() >= 2 && var > 1e-12 { var } else { 1.0 };
        Self {
            length_scales: (0..domain.dim())
                .map(|j| (1e-3 * domain.width(j), 10.0 * domain.width(j)))
                .collect(),
            signal_variance: (1e-6 * scale, 1e6 * scale),
            noise_variance: (1e-8, scale.max(1e-8)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo > 0.0 && hi >= lo && hi.is_finite();
        if !self.length_scales.iter().all(|b| ok(*b))
            || !ok(self.signal_variance)
            || !ok(self.noise_variance)
        {
            return Err(Error::InvalidArgument(format!("invalid bounds {self:?}")));
        }
        Ok(())
    }

    fn log_box(&self) -> Vec<(f64, f64)> {
        let mut b = Vec::with_capacity(self.length_scales.len() + 2);
        b.push(self.signal_variance);
        b.extend(self.length_scales.iter().copied());
        b.push(self.noise_variance);
        b.into_iter().map(|(lo, hi)| (lo.ln(), hi.ln())).collect()
    }

    /// Clamps `spec` into the bounds.
    pub fn clamp(&self, spec: &ModelSpec) -> ModelSpec {
        ModelSpec {
            mean_const: spec.mean_const,
            signal_variance: spec
                .signal_variance
                .clamp(self.signal_variance.0, self.signal_variance.1),
            length_scales: spec
                .length_scales
                .iter()
                .zip(&self.length_scales)
                .map(|(l, (lo, hi))| l.clamp(*lo, *hi))
                .collect(),
            noise_variance: spec
                .noise_variance
                .clamp(self.noise_variance.0, self.noise_variance.1),
        }
    }

    /// Log-space region random starts are drawn from: a typical sub-box
    /// around the geometric centre of the length-scale and signal bounds and
    /// the upper part of the noise range. Tiny noise starts are avoided
    /// because the likelihood is nearly flat in log-noise there.
    fn start_box(&self) -> Vec<(f64, f64)> {
        let centre = |(lo, hi): (f64, f64)| 0.5 * (lo.ln() + hi.ln());
        let mut b = Vec::with_capacity(self.length_scales.len() + 2);
        let c = centre(self.signal_variance);
        b.push((c + 0.2f64.ln(), c + 5f64.ln()));
        for &ls in &self.length_scales {
            let c = centre(ls);
            b.push((c + 0.5f64.ln(), c + 10f64.ln()));
        }
        let hi = self.noise_variance.1.ln();
        b.push((hi + 1e-3f64.ln(), hi + 0.5f64.ln()));
        b.iter()
            .zip(self.log_box())
            .map(|(&(a, z), (lo, hi))| (a.clamp(lo, hi), z.clamp(lo, hi)))
            .collect()
    }

    pub fn contains(&self, spec: &ModelSpec) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12);
        within(spec.signal_variance, self.signal_variance)
            && within(spec.noise_variance, self.noise_variance)
            && spec
                .length_scales
                .iter()
                .zip(&self.length_scales)
                .all(|(l, b)| within(*l, *b))
    }
}

/// Result of [`fit_mle`].
#[derive(Debug, Clone)]
pub struct MleFit {
    pub spec: ModelSpec,
    pub log_likelihood: f64,
    /// Profiled log likelihood at each (clamped) starting point.
    pub start_log_likelihoods: Vec<f64>,
}

struct Factored {
    chol: DMatrix<f64>,
}

fn kernel_matrix(data: &Dataset, spec: &ModelSpec) -> DMatrix<f64> {
    let pts = data.points();
    let n = pts.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = crate::gp::matern52(&pts[i], &pts[j], spec);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn factor(data: &Dataset, spec: &ModelSpec) -> Result<(DMatrix<f64>, Factored)> {
    let mut c = kernel_matrix(data, spec);
    let k = c.clone();
    for (i, p) in data.points().iter().enumerate() {
        c[(i, i)] += spec.noise_at(p);
    }
    let (chol, _) = cholesky_with_jitter(&c)?;
    Ok((k, Factored { chol }))
}

fn lml_from(f: &Factored, resid: &DVector<f64>) -> f64 {
    let n = resid.len();
    let w = f
        .chol
        .solve_lower_triangular(resid)
        .expect("positive diagonal");
    let logdet: f64 = (0..n).map(|i| f.chol[(i, i)].ln()).sum();
    -0.5 * w.dot(&w) - logdet - 0.5 * n as f64 * LN_2PI
}

/// Log marginal likelihood of `data` under `spec` (mean taken as given).
pub fn log_marginal_likelihood(data: &Dataset, spec: &ModelSpec) -> Result<f64> {
    spec.validate()?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let (_, f) = factor(data, spec)?;
    let resid = DVector::from_iterator(data.len(), data.values().iter().map(|y| y - spec.mean_const));
    Ok(lml_from(&f, &resid))
}

fn gls_mean(f: &Factored, y: &DVector<f64>) -> f64 {
    let n = y.len();
    let ones = DVector::from_element(n, 1.0);
    let a = f.chol.solve_lower_triangular(&ones).expect("positive diagonal");
    let b = f.chol.solve_lower_triangular(y).expect("positive diagonal");
    a.dot(&b) / a.dot(&a)
}

fn spec_from_log(theta: &[f64], d: usize) -> ModelSpec {
    ModelSpec {
        mean_const: 0.0,
        signal_variance: theta[0].exp(),
        length_scales: theta[1..=d].iter().map(|t| t.exp()).collect(),
        noise_variance: theta[d + 1].exp(),
    }
}

fn log_from_spec(spec: &ModelSpec) -> Vec<f64> {
    let mut t = vec![spec.signal_variance.ln()];
    t.extend(spec.length_scales.iter().map(|l| l.ln()));
    t.push(spec.noise_variance.max(1e-300).ln());
    t
}

/// Profiled log likelihood and its gradient in log-parameter space.
fn profiled(data: &Dataset, theta: &[f64], want_grad: bool) -> Option<(f64, f64, Vec<f64>)> {
    let d = theta.len() - 2;
    let spec = spec_from_log(theta, d);
    let (k, f) = factor(data, &spec).ok()?;
    let n = data.len();
    let y = DVector::from_column_slice(data.values());
    let mean = gls_mean(&f, &y);
    let resid = y.map(|v| v - mean);
    let value = lml_from(&f, &resid);
    if !value.is_finite() {
        return None;
    }
    if !want_grad {
        return Some((value, mean, Vec::new()));
    }
    let cinv = {
        let linv = f
            .chol
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("positive diagonal");
        linv.transpose() * linv
    };
    let alpha = &cinv * &resid;
    // W = ααᵀ − C⁻¹; dL/dθ = ½ Σ W ∘ ∂C/∂θ
    let w = &alpha * alpha.transpose() - &cinv;
    let mut grad = vec![0.0; d + 2];
    grad[0] = 0.5 * w.component_mul(&k).sum();
    let pts = data.points();
    for i in 0..n {
        for j in 0..i {
            let r = {
                let mut s = 0.0;
                for m in 0..d {
                    let t = (pts[i][m] - pts[j][m]) / spec.length_scales[m];
                    s += t * t;
                }
                s.sqrt()
            };
            let sr = SQRT5 * r;
            let c = (5.0 / 3.0) * spec.signal_variance * (1.0 + sr) * (-sr).exp();
            for m in 0..d {
                let t = (pts[i][m] - pts[j][m]) / spec.length_scales[m];
                // off-diagonal pair: the ½ cancels the mirrored entry
                grad[1 + m] += w[(i, j)] * c * t * t;
            }
        }
    }
    let noise_trace: f64 = (0..n).map(|i| w[(i, i)]).sum();
    grad[d + 1] = 0.5 * spec.noise_variance * noise_trace;
    Some((value, mean, grad))
}

fn project(theta: &mut [f64], bounds: &[(f64, f64)]) {
    for (t, (lo, hi)) in theta.iter_mut().zip(bounds) {
        *t = t.clamp(*lo, *hi);
    }
}

fn ascend(data: &Dataset, start: Vec<f64>, bounds: &[(f64, f64)]) -> Option<(Vec<f64>, f64)> {
    let mut x = start;
    project(&mut x, bounds);
    let (mut fx, _, mut gx) = profiled(data, &x, true)?;
    let mut step = 0.1;
    let mut history = vec![fx];
    for _ in 0..MAX_ITERS {
        let mut accepted = None;
        let mut t = step;
        while t > 1e-12 {
            let mut xn: Vec<f64> = x.iter().zip(&gx).map(|(a, g)| a + t * g).collect();
            project(&mut xn, bounds);
            let dir: f64 = xn.iter().zip(&x).zip(&gx).map(|((a, b), g)| (a - b) * g).sum();
            if dir <= 0.0 {
                break;
            }
            if let Some((fn_, _, gn)) = profiled(data, &xn, true) {
                if fn_ >= fx + 1e-4 * dir {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else { break };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        step = if sy < 0.0 { (ss / -sy).clamp(1e-4, 1e2) } else { (2.0 * t).min(1e2) };
        x = xn;
        fx = fn_;
        gx = gn;
        // stop once progress over a window of iterations is negligible:
        // flat ridges otherwise creep along until MAX_ITERS
        history.push(fx);
        if history.len() > STALL_WINDOW {
            let gain = fx - history[history.len() - 1 - STALL_WINDOW];
            if gain < STALL_TOL {
                break;
            }
        }
    }
    Some((x, fx))
}

/// Multi-start MLE. `warm_starts` are clamped into the bounds and tried
/// before `restarts` further starts: the centre of a typical sub-region of
/// the bounds, then uniform log-space draws from that region.
pub fn fit_mle<R: Rng + ?Sized>(
    data: &Dataset,
    bounds: &HyperBounds,
    restarts: usize,
    rng: &mut R,
    warm_starts: &[ModelSpec],
) -> Result<MleFit> {
    if data.len() < 2 {
        return Err(Error::Precondition(format!(
            "MLE needs at least 2 observations, got {}",
            data.len()
        )));
    }
    bounds.validate()?;
    let d = bounds.length_scales.len();
    crate::error::dim_check(d, data.points()[0].len(), "fit_mle bounds")?;
    let log_bounds = bounds.log_box();
    let mut starts: Vec<Vec<f64>> = warm_starts
        .iter()
        .map(|s| {
            let mut t = log_from_spec(&bounds.clamp(s));
            project(&mut t, &log_bounds);
            t
        })
        .collect();
    let start_box = bounds.start_box();
    if restarts > 0 {
        // centre of the start region
        starts.push(start_box.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect());
    }
    for _ in 1..restarts {
        starts.push(
            start_box
                .iter()
                .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect(),
        );
    }
    let mut start_lls = Vec::with_capacity(starts.len());
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in starts {
        start_lls.push(profiled(data, &s, false).map_or(f64::NEG_INFINITY, |v| v.0));
        if let Some((x, f)) = ascend(data, s, &log_bounds) {
            if best.as_ref().is_none_or(|b| f > b.1) {
                best = Some((x, f));
            }
        }
    }
    let (theta, ll) = best.ok_or_else(|| {
        Error::Numerical("likelihood could not be evaluated at any start".into())
    })?;
    let (_, mean, _) = profiled(data, &theta, false)
        .ok_or_else(|| Error::Numerical("likelihood failed at optimum".into()))?;
    let mut spec = spec_from_log(&theta, d);
    spec.mean_const = mean;
    Ok(MleFit {
        spec,
        log_likelihood: ll,
        start_log_likelihoods: start_lls,
    })
}

/// Multi-start MLE from random starts only; see [`fit_mle`].
pub fn fit_hyperparameters_mle<R: Rng + ?Sized>(
    data: &Dataset,
    bounds: &HyperBounds,
    restarts: usize,
    rng: &mut R,
) -> Result<ModelSpec> {
    fit_mle(data, bounds, restarts, rng, &[]).map(|f| f.spec)
}
