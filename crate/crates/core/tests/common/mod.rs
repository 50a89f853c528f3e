//! Random problem generators shared by the integration tests.
#![allow(dead_code)]

use qkg::acquisition::Batch;
use qkg::gp::{Dataset, ModelSpec, Posterior};
use qkg::sampling::{BoxDomain, DiscreteSet, Provenance};
use rand::Rng;

pub fn random_point<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

/// Points in the unit cube that are at least `min_sep` apart.
pub fn spread_points<R: Rng>(rng: &mut R, d: usize, n: usize, min_sep: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    while out.len() < n {
        let x = random_point(rng, d);
        let ok = out.iter().all(|y| {
            x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= min_sep
        });
        if ok {
            out.push(x);
        }
    }
    out
}

pub fn random_spec<R: Rng>(rng: &mut R, d: usize, noise: f64) -> ModelSpec {
    ModelSpec {
        mean_const: rng.random_range(-0.5..0.5),
        signal_variance: rng.random_range(0.5..2.0),
        length_scales: (0..d).map(|_| rng.random_range(0.2..0.8)).collect(),
        noise_variance: noise,
    }
}

/// A smooth random test function evaluated at `points`.
pub fn smooth_values<R: Rng>(rng: &mut R, points: &[Vec<f64>]) -> Vec<f64> {
    let d = points.first().map_or(0, Vec::len);
    let freq: Vec<f64> = (0..d).map(|_| rng.random_range(1.0..4.0)).collect();
    let phase: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..6.0)).collect();
    points
        .iter()
        .map(|x| {
            x.iter()
                .enumerate()
                .map(|(j, v)| (freq[j] * v + phase[j]).sin())
                .sum::<f64>()
        })
        .collect()
}

/// A random posterior and matching discretization on the unit cube.
pub struct Config {
    pub post: Posterior,
    pub disc: DiscreteSet,
    pub batch: Batch,
    pub domain: BoxDomain,
}

pub fn random_config<R: Rng>(rng: &mut R, d: usize, q: usize, n: usize, noise: f64, m: usize) -> Config {
    let points = spread_points(rng, d, n, 0.05);
    let values = smooth_values(rng, &points);
    let data = Dataset::new(points.clone(), values).unwrap();
    let post = Posterior::new(data, random_spec(rng, d, noise)).unwrap();
    let mut disc = DiscreteSet::new();
    disc.extend((0..m).map(|_| random_point(rng, d)), Provenance::PosteriorMinimumSample);
    disc.extend(points, Provenance::PastObservation);
    let batch = Batch::new(spread_points(rng, d, q, 0.05)).unwrap();
    Config {
        post,
        disc,
        batch,
        domain: BoxDomain::unit(d),
    }
}

/// Sample mean and standard error.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
