use qkg::acquisition::Batch;
use qkg::gp::{Dataset, ModelSpec, Posterior};
use qkg::sampling::{build_discretization, sample_posterior_minima, BoxDomain};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn convex_posterior() -> Posterior {
    // noise-free dense grid on a bowl with minimum at (0.3, 0.6)
    let mut points = Vec::new();
    for i in 0..7 {
        for j in 0..7 {
            points.push(vec![i as f64 / 6.0, j as f64 / 6.0]);
        }
    }
    let values = points
        .iter()
        .map(|x| 4.0 * ((x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2)))
        .collect();
    Posterior::new(Dataset::new(points, values).unwrap(), ModelSpec::isotropic(2, 0.1, 0.5)).unwrap()
}

#[test]
fn minima_concentrate_near_the_mean_minimizer() {
    let post = convex_posterior();
    let domain = BoxDomain::unit(2);
    // argmin of the posterior mean on a fine grid
    let mut best = (f64::INFINITY, vec![0.0, 0.0]);
    for i in 0..=200 {
        for j in 0..=200 {
            let x = vec![i as f64 / 200.0, j as f64 / 200.0];
            let m = post.mean(&x);
            if m < best.0 {
                best = (m, x);
            }
        }
    }
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let minima = sample_posterior_minima(&post, 50, 500, &domain, &mut rng).unwrap();
        let near = minima
            .iter()
            .filter(|x| x.iter().zip(&best.1).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= 0.1)
            .count();
        assert!(near >= 45, "seed {seed}: {near}/50 near {:?}", best.1);
    }
}

#[test]
fn prior_minima_are_spread_out_and_reproducible() {
    let prior = Posterior::new(Dataset::empty(), ModelSpec::isotropic(2, 1.0, 0.2)).unwrap();
    let domain = BoxDomain::cube(2, -1.0, 3.0).unwrap();
    let a = sample_posterior_minima(&prior, 20, 200, &domain, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = sample_posterior_minima(&prior, 20, 200, &domain, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|x| domain.contains(x)));
    assert!(a.iter().any(|x| x != &a[0]));
}

#[test]
fn paper_scale_discretization_size() {
    let domain = BoxDomain::cube(2, -15.0, 15.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let points: Vec<Vec<f64>> = (0..12).map(|_| domain.sample_uniform(&mut rng)).collect();
    let values = points.iter().map(|x| x[0].sin() + x[1] / 10.0).collect();
    let post = Posterior::new(Dataset::new(points.clone(), values).unwrap(), ModelSpec::isotropic(2, 1.0, 6.0)).unwrap();
    let batch = Batch::new((0..4).map(|_| domain.sample_uniform(&mut rng)).collect()).unwrap();
    let disc = build_discretization(&post, &batch, 1000, 500, &domain, &mut rng).unwrap();
    assert!(disc.len() <= 1016);
    for x in points.iter().chain(batch.points()) {
        assert!(disc.find(x).is_some());
    }
    assert!(disc.points().iter().all(|x| domain.contains(x)));
}
