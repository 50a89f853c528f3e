//! Fast invariant suite behind `qkg selftest`.
//!
//! Every check uses fixed internal seeds, so repeated runs print identical
//! reports.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{Batch, BeforeSet, NormalStream, QeiProblem, QkgProblem};
use crate::gp::{cholesky_derivative, cholesky_with_jitter, matern52, matern52_grad_x1, Dataset, ModelSpec, Posterior};
use crate::sampling::{BoxDomain, DiscreteSet, Provenance};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {:<28} {}", c.name, c.detail)?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn random_spec(rng: &mut ChaCha8Rng, d: usize, noise: f64) -> ModelSpec {
    ModelSpec {
        mean_const: rng.random_range(-0.5..0.5),
        signal_variance: rng.random_range(0.5..2.0),
        length_scales: (0..d).map(|_| rng.random_range(0.2..0.8)).collect(),
        noise_variance: noise,
    }
}

fn random_data(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Dataset {
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect();
    let values = points
        .iter()
        .map(|x| x.iter().map(|v| (3.0 * v).sin()).sum::<f64>())
        .collect();
    Dataset::new(points, values).expect("consistent dataset")
}

fn random_points(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Vec<Vec<f64>> {
    (0..m).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

/// Closed-form Matérn 5/2 values, computed without the library kernel.
fn kernel_closed_form() -> CheckResult {
    let spec = ModelSpec::isotropic(1, 1.7, 0.8);
    let mut worst = 0.0f64;
    for &r in &[0.0, 0.3, 1.0, 2.5] {
        let s5r = 5f64.sqrt() * r;
        let expect = 1.7 * (1.0 + s5r + 5.0 * r * r / 3.0) * (-s5r).exp();
        let got = matern52(&[0.1], &[0.1 + 0.8 * r], &spec);
        worst = worst.max((got - expect).abs());
    }
    // independent high-precision value at unit distance, unit hyperparameters
    let unit = matern52(&[0.0], &[1.0], &ModelSpec::isotropic(1, 1.0, 1.0));
    worst = worst.max((unit - 0.523_994_108_831_820_3).abs());
    check("kernel/closed-form", worst < 1e-12, format!("max abs err {worst:.2e}"))
}

fn kernel_gradient() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let d = 3;
        let spec = random_spec(&mut rng, d, 0.0);
        let x1: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let x2: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let mut g = vec![0.0; d];
        matern52_grad_x1(&x1, &x2, &spec, &mut g);
        for j in 0..d {
            let h = 1e-6;
            let (mut p, mut m) = (x1.clone(), x1.clone());
            p[j] += h;
            m[j] -= h;
            let fd = (matern52(&p, &x2, &spec) - matern52(&m, &x2, &spec)) / (2.0 * h);
            worst = worst.max((fd - g[j]).abs() / (1e-8 + fd.abs()));
        }
    }
    check("kernel/gradient-fd", worst < 1e-5, format!("max rel err {worst:.2e}"))
}

fn cholesky_derivative_check() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let b = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let a = &b * b.transpose() + DMatrix::identity(5, 5);
        let e = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let da = &e + e.transpose();
        let h = 1e-6;
        let (lp, _) = cholesky_with_jitter(&(&a + &da * h)).expect("spd");
        let (lm, _) = cholesky_with_jitter(&(&a - &da * h)).expect("spd");
        let (l, _) = cholesky_with_jitter(&a).expect("spd");
        let fd = (lp - lm) / (2.0 * h);
        let dl = cholesky_derivative(&l, &da).expect("derivative");
        worst = worst.max((&fd - &dl).norm() / fd.norm());
    }
    check("cholesky/derivative-fd", worst < 1e-6, format!("max rel err {worst:.2e}"))
}

fn gp_interpolation() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let d = 2;
        let data = random_data(&mut rng, d, 6);
        let spec = random_spec(&mut rng, d, 0.0);
        let post = match Posterior::new(data.clone(), spec) {
            Ok(p) => p,
            Err(e) => return check("gp/interpolation", false, e.to_string()),
        };
        for (x, y) in data.points().iter().zip(data.values()) {
            worst = worst.max((post.mean(x) - y).abs()).max(post.variance(x).abs());
        }
    }
    check("gp/interpolation", worst < 1e-6, format!("max abs err {worst:.2e}"))
}

fn qkg_gradient_fd() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let domain = BoxDomain::unit(2);
    let mut worst = 0.0f64;
    for config in 0..5 {
        let d = 2;
        let q = 1 + config % 3;
        let noise = if config % 2 == 0 { 0.0 } else { 0.25 };
        let data = random_data(&mut rng, d, 5);
        let spec = random_spec(&mut rng, d, noise);
        let post = match Posterior::new(data.clone(), spec) {
            Ok(p) => p,
            Err(e) => return check("qkg/gradient-fd", false, e.to_string()),
        };
        let mut disc = DiscreteSet::new();
        disc.extend(random_points(&mut rng, d, 20), Provenance::PosteriorMinimumSample);
        disc.extend(data.points().iter().cloned(), Provenance::PastObservation);
        let problem = QkgProblem::new(&post, &disc);
        let rows: Vec<Vec<f64>> = (0..q).map(|_| domain.sample_uniform(&mut rng)).collect();
        let batch = Batch::new(rows.clone()).expect("batch");
        let stream = NormalStream::Seeded(1000 + config as u64);
        let n_mc = 256;
        let est = match problem.gradient(&batch, n_mc, stream) {
            Ok(e) => e,
            Err(e) => return check("qkg/gradient-fd", false, e.to_string()),
        };
        let grad = est.gradient.expect("gradient requested");
        let h = 1e-6;
        for i in 0..q {
            for j in 0..d {
                let shifted = |delta: f64| {
                    let mut r = rows.clone();
                    r[i][j] += delta;
                    problem
                        .value(&Batch::new(r).expect("batch"), n_mc, stream)
                        .map(|e| e.value)
                        .unwrap_or(f64::NAN)
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                let err = (fd - grad[i][j]).abs() / (1e-3 + fd.abs());
                worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
            }
        }
    }
    check("qkg/gradient-fd", worst < 1e-3, format!("5 configs, max rel err {worst:.2e}"))
}

fn qkg_qei_reduction() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let domain = BoxDomain::unit(2);
    let mut worst = 0.0f64;
    for config in 0..5 {
        let data = random_data(&mut rng, 2, 5);
        let spec = random_spec(&mut rng, 2, 0.0);
        let post = match Posterior::new(data.clone(), spec) {
            Ok(p) => p,
            Err(e) => return check("qkg/qei-reduction", false, e.to_string()),
        };
        let mut disc = DiscreteSet::new();
        disc.extend(data.points().iter().cloned(), Provenance::PastObservation);
        let qkg = QkgProblem::new(&post, &disc).with_before_set(BeforeSet::ExcludeCandidates);
        let qei = QeiProblem::new(&post).expect("data present");
        let batch = Batch::new((0..2).map(|_| domain.sample_uniform(&mut rng)).collect()).expect("batch");
        let stream = NormalStream::Seeded(2000 + config);
        let (a, b) = match (qkg.sample_values(&batch, 256, stream), qei.sample_values(&batch, 256, stream)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return check("qkg/qei-reduction", false, e.to_string()),
        };
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    check("qkg/qei-reduction", worst < 1e-10, format!("max per-sample diff {worst:.2e}"))
}

/// Runs every check.
pub fn run_selftest() -> SelftestReport {
    SelftestReport {
        checks: vec![
            kernel_closed_form(),
            kernel_gradient(),
            cholesky_derivative_check(),
            gp_interpolation(),
            qkg_gradient_fd(),
            qkg_qei_reduction(),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[cfg(not(feature = "corrupt-kernel"))]
    #[test]
    fn fresh_build_passes() {
        let report = run_selftest();
        assert!(report.passed(), "{report}");
    }

    #[cfg(feature = "corrupt-kernel")]
    #[test]
    fn corrupted_kernel_is_caught() {
        let report = run_selftest();
        assert!(!report.passed());
        assert!(report.failures().any(|c| c.name.starts_with("kernel/")), "{report}");
    }

    #[test]
    fn report_is_deterministic() {
        assert_eq!(run_selftest().to_string(), run_selftest().to_string());
    }
}
