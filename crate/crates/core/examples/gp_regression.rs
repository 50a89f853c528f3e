//! Fit a Matérn 5/2 GP to noisy samples of a 1-d function by maximum
//! likelihood and print the posterior on a grid.
//!
//! ```text
//! cargo run --release --example gp_regression -- [n] [noise_sd] [seed]
//! ```

use qkg::gp::{fit_mle, Dataset, HyperBounds, Posterior};
use qkg::sampling::BoxDomain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn truth(x: f64) -> f64 {
    (3.0 * x).sin() + 0.3 * x * x
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().map_or(Ok(12), |s| s.parse())?;
    let noise_sd: f64 = args.get(1).map_or(Ok(0.1), |s| s.parse())?;
    let seed: u64 = args.get(2).map_or(Ok(0), |s| s.parse())?;

    let domain = BoxDomain::cube(1, -2.0, 2.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..n).map(|_| domain.sample_uniform(&mut rng)).collect();
    let values = points
        .iter()
        .map(|x| truth(x[0]) + noise_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let data = Dataset::new(points, values)?;

    let fit = fit_mle(&data, &HyperBounds::for_data(&data, &domain), 8, &mut rng, &[])?;
    let spec = &fit.spec;
    println!(
        "MLE: mean {:.3}, signal variance {:.3}, length scale {:.3}, noise variance {:.2e} (log lik {:.2})",
        spec.mean_const, spec.signal_variance, spec.length_scales[0], spec.noise_variance, fit.log_likelihood
    );

    let post = Posterior::new(data, fit.spec)?;
    println!("{:>7} {:>9} {:>9} {:>9}", "x", "truth", "mean", "sd");
    for i in 0..=16 {
        let x = [-2.0 + 4.0 * i as f64 / 16.0];
        println!(
            "{:>7.3} {:>9.4} {:>9.4} {:>9.4}",
            x[0],
            truth(x[0]),
            post.mean(&x),
            post.variance(&x).max(0.0).sqrt()
        );
    }
    Ok(())
}
