mod common;

use qkg::acquisition::{
    qkg_async, qkg_gradient, qkg_value, sample_inner_g, sigma_tilde, Batch, NormalStream, QkgProblem,
};
use qkg::gp::{Dataset, ModelSpec, Posterior};
use qkg::sampling::{DiscreteSet, Provenance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{mean_se, random_config};

#[test]
fn sigma_tilde_vanishes_at_a_noise_free_observation() {
    let spec = ModelSpec::isotropic(2, 1.0, 0.4);
    let data = Dataset::new(vec![vec![0.2, 0.2], vec![0.7, 0.6]], vec![1.0, -1.0]).unwrap();
    let post = Posterior::new(data, spec).unwrap();
    let batch = Batch::new(vec![vec![0.2, 0.2]]).unwrap();
    for x in [vec![0.5, 0.5], vec![0.9, 0.1], vec![0.2, 0.2]] {
        let st = sigma_tilde(&post, &batch, &x).unwrap();
        assert!(st[0].abs() <= 1e-3, "{st:?}");
    }
}

#[test]
fn two_point_prior_matches_hand_computation_and_quadrature() {
    // n = 0: μ ≡ c, σ̃(x0) = k(x0, z)/s, σ̃(z) = s with s = √(s² + σ²)
    let spec = ModelSpec::new(0.3, 1.5, vec![0.4], 0.2).unwrap();
    let post = Posterior::new(Dataset::empty(), spec.clone()).unwrap();
    let x0 = vec![0.1];
    let z = vec![0.35];
    let batch = Batch::new(vec![z.clone()]).unwrap();
    let mut disc = DiscreteSet::new();
    disc.insert(x0.clone(), Provenance::PastObservation);
    let s = (1.5f64 + 0.2).sqrt();
    let a = qkg::gp::matern52(&x0, &z, &spec) / s;
    let b = 1.5 / s;
    for zq in [-1.3, 0.0, 0.7, 2.1] {
        let g = sample_inner_g(&post, &batch, &disc, &[zq]).unwrap().value;
        let hand = 0.3 - (0.3 + a * zq).min(0.3 + b * zq);
        assert!((g - hand).abs() < 1e-12, "{g} vs {hand}");
    }
    // E[max(-aZ, -bZ)] by trapezoidal quadrature over the standard normal
    let steps = 200_000;
    let (lo, hi) = (-12.0, 12.0);
    let dz = (hi - lo) / steps as f64;
    let quad: f64 = (0..=steps)
        .map(|i| {
            let zz = lo + i as f64 * dz;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            w * (-a * zz).max(-b * zz) * (-0.5 * zz * zz).exp() / (2.0 * std::f64::consts::PI).sqrt()
        })
        .sum::<f64>()
        * dz;
    let est = qkg_value(&post, &batch, &disc, 20_000, 9).unwrap();
    assert!((est.value - quad).abs() <= 3.0 * est.value_stderr, "{} vs {quad}", est.value);
}

#[test]
fn duplicating_a_noise_free_observation_is_worthless() {
    let spec = ModelSpec::isotropic(2, 1.0, 0.3);
    let pts = vec![vec![0.2, 0.2], vec![0.7, 0.6], vec![0.4, 0.9]];
    let post = Posterior::new(Dataset::new(pts.clone(), vec![0.5, -0.2, 0.1]).unwrap(), spec).unwrap();
    let mut disc = DiscreteSet::new();
    disc.extend(pts.clone(), Provenance::PastObservation);
    let batch = Batch::new(vec![pts[1].clone()]).unwrap();
    let est = qkg_value(&post, &batch, &disc, 2048, 3).unwrap();
    assert!(est.value <= 1e-3 + 3.0 * est.value_stderr, "{est:?}");
}

#[test]
fn gradient_matches_crn_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let h = 1e-4;
    let (mut pass, mut total) = (0, 0);
    for trial in 0..12usize {
        let d = 1 + trial % 3;
        let q = 1 + trial % 3;
        let cfg = random_config(&mut rng, d, q, 1 + trial % 5, if trial % 2 == 0 { 0.0 } else { 0.25 }, 20);
        let est = qkg_gradient(&cfg.post, &cfg.batch, &cfg.disc, 1024, trial as u64).unwrap();
        let grad = est.gradient.clone().unwrap();
        let se = est.gradient_stderr.clone().unwrap();
        let scale = grad.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let problem = QkgProblem::new(&cfg.post, &cfg.disc);
        for i in 0..q {
            for j in 0..d {
                let eval = |delta: f64| {
                    let mut rows = cfg.batch.points().to_vec();
                    rows[i][j] += delta;
                    problem
                        .value(&Batch::new(rows).unwrap(), 1024, NormalStream::Seeded(trial as u64))
                        .unwrap()
                        .value
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                total += 1;
                if (fd - grad[i][j]).abs() <= (1e-2 * scale).max(3.0 * se[i][j]) {
                    pass += 1;
                }
            }
        }
    }
    assert!(pass as f64 >= 0.95 * total as f64, "{pass}/{total}");
}

#[test]
fn reflected_configuration_negates_the_gradient() {
    // data, discretization and batch symmetric under x0 -> 1 - x0
    let reflect = |x: &Vec<f64>| vec![1.0 - x[0], x[1]];
    let base = vec![vec![0.1, 0.3], vec![0.3, 0.8], vec![0.45, 0.5]];
    let mut pts = base.clone();
    pts.extend(base.iter().map(reflect));
    let vals = vec![0.3, -0.5, 0.2, 0.3, -0.5, 0.2];
    let post = Posterior::new(Dataset::new(pts.clone(), vals).unwrap(), ModelSpec::isotropic(2, 1.0, 0.3).with_noise(0.01)).unwrap();
    let extra = vec![vec![0.2, 0.6], vec![0.4, 0.1], vec![0.8, 0.6], vec![0.6, 0.1]];
    let mut disc = DiscreteSet::new();
    disc.extend(extra, Provenance::PosteriorMinimumSample);
    disc.extend(pts, Provenance::PastObservation);
    let rows = vec![vec![0.25, 0.55], vec![0.6, 0.2]];
    let mirrored: Vec<Vec<f64>> = rows.iter().map(reflect).collect();
    let g1 = qkg_gradient(&post, &Batch::new(rows).unwrap(), &disc, 512, 5).unwrap();
    let g2 = qkg_gradient(&post, &Batch::new(mirrored).unwrap(), &disc, 512, 5).unwrap();
    assert!((g1.value - g2.value).abs() < 1e-9);
    let (a, b) = (g1.gradient.unwrap(), g2.gradient.unwrap());
    for i in 0..2 {
        assert!((a[i][0] + b[i][0]).abs() < 1e-8, "{a:?} {b:?}");
        assert!((a[i][1] - b[i][1]).abs() < 1e-8, "{a:?} {b:?}");
    }
}

#[test]
fn async_value_is_the_stacked_value_and_gradient_covers_new_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let cfg = random_config(&mut rng, 2, 2, 4, 0.1, 20);
    let pending = vec![vec![0.15, 0.85], vec![0.9, 0.4]];
    let est = qkg_async(&cfg.post, &cfg.batch, &pending, &cfg.disc, 512, 3).unwrap();
    let stacked = cfg.batch.stack(&Batch::new(pending).unwrap()).unwrap();
    let full = qkg_value(&cfg.post, &stacked, &cfg.disc, 512, 3).unwrap();
    assert_eq!(est.value.to_bits(), full.value.to_bits());
    let g = est.gradient.unwrap();
    assert_eq!(g.len(), 2);
    assert!(g.iter().flatten().all(|v| v.is_finite()));
    assert!(est.value >= -3.0 * est.value_stderr);
}

#[test]
fn estimates_are_deterministic_and_jensen_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for trial in 0..20 {
        let cfg = random_config(&mut rng, 2, 1 + trial % 3, trial % 5, 0.0, 10);
        let a = qkg_gradient(&cfg.post, &cfg.batch, &cfg.disc, 256, 8).unwrap();
        let b = qkg_gradient(&cfg.post, &cfg.batch, &cfg.disc, 256, 8).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.gradient, b.gradient);
        assert!(a.value >= -3.0 * a.value_stderr);
    }
}

#[test]
fn reparameterized_mean_has_the_posterior_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let cfg = random_config(&mut rng, 2, 2, 4, 0.1, 0);
    let x = vec![0.4, 0.6];
    let st = sigma_tilde(&cfg.post, &cfg.batch, &x).unwrap();
    let stream = NormalStream::Seeded(1);
    let draws: Vec<f64> = (0..20_000)
        .map(|m| {
            let z = stream.draw(m, 2);
            cfg.post.mean(&x) + st[0] * z[0] + st[1] * z[1]
        })
        .collect();
    let (mean, se) = mean_se(&draws);
    assert!((mean - cfg.post.mean(&x)).abs() <= 5.0 * se);
}
