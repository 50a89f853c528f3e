use qkg::bench::{branin, eval_objective, hartmann6, SyntheticFunction, BRANIN_MIN, HARTMANN6_MIN};
use qkg::sampling::BoxDomain;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Projected gradient descent with central-difference gradients and
/// backtracking.
fn descend(f: &dyn Fn(&[f64]) -> f64, mut x: Vec<f64>, domain: &BoxDomain) -> (Vec<f64>, f64) {
    let mut fx = f(&x);
    let mut step = 1e-2 * domain.mean_width();
    for _ in 0..5000 {
        let g: Vec<f64> = (0..x.len())
            .map(|j| {
                let h = 1e-7 * domain.width(j);
                let (mut p, mut m) = (x.clone(), x.clone());
                p[j] += h;
                m[j] -= h;
                domain.clamp(&mut p);
                domain.clamp(&mut m);
                (f(&p) - f(&m)) / (p[j] - m[j])
            })
            .collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            break;
        }
        let mut moved = false;
        while step > 1e-14 {
            let mut y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b / norm).collect();
            domain.clamp(&mut y);
            let fy = f(&y);
            if fy < fx {
                x = y;
                fx = fy;
                step *= 1.5;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (x, fx)
}

#[test]
fn branin_grid_oracle() {
    let domain = SyntheticFunction::Branin2.domain();
    let n = 2000;
    let mut cells: Vec<(f64, Vec<f64>)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let x = vec![-15.0 + 30.0 * i as f64 / (n - 1) as f64, -15.0 + 30.0 * j as f64 / (n - 1) as f64];
            let v = branin(&x);
            if v < 0.5 {
                cells.push((v, x));
            }
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let refined = cells
        .iter()
        .take(10)
        .map(|(_, x)| descend(&|y: &[f64]| branin(y), x.clone(), &domain).1)
        .fold(f64::INFINITY, f64::min);
    assert!((refined - 0.397887).abs() < 1e-6, "{refined}");
    assert!((refined - BRANIN_MIN).abs() < 1e-9, "{refined} vs {BRANIN_MIN}");
}

#[test]
fn hartmann6_grid_oracle() {
    let domain = SyntheticFunction::Hartmann6.domain();
    let n = 8usize;
    let mut cells: Vec<(f64, Vec<f64>)> = Vec::new();
    for k in 0..n.pow(6) {
        let mut rem = k;
        let x: Vec<f64> = (0..6)
            .map(|_| {
                let c = rem % n;
                rem /= n;
                (c as f64 + 0.5) / n as f64
            })
            .collect();
        cells.push((hartmann6(&x), x));
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let refined = cells
        .iter()
        .take(20)
        .map(|(_, x)| descend(&|y: &[f64]| hartmann6(y), x.clone(), &domain).1)
        .fold(f64::INFINITY, f64::min);
    assert!((refined + 3.32237).abs() < 1e-5, "{refined}");
    assert!((refined - HARTMANN6_MIN).abs() < 1e-8, "{refined} vs {HARTMANN6_MIN}");
}

#[test]
fn true_minimum_lower_bounds_every_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for f in SyntheticFunction::ALL {
        let domain = f.domain();
        let min = f.true_min();
        for _ in 0..2000 {
            let x = domain.sample_uniform(&mut rng);
            assert!(min <= eval_objective(f.name(), &x).unwrap() + 1e-9);
        }
    }
}

#[test]
fn analytic_minima() {
    assert_eq!(eval_objective("rosenbrock3", &[1.0, 1.0, 1.0]).unwrap(), 0.0);
    assert!(eval_objective("ackley5", &[0.0; 5]).unwrap().abs() < 1e-12);
    assert!(eval_objective("branin2", &[20.0, 0.0]).is_err());
}
