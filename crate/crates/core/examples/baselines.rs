//! Compare the batches chosen by q-EI, GP-BUCB and GP-UCB-PE from the same
//! posterior.
//!
//! ```text
//! cargo run --release --example baselines -- [q] [seed]
//! ```

use qkg::acquisition::{
    gp_bucb_select, gp_ucb_pe_select, qei_gradient, qei_value, Batch, BaselineConfig,
};
use qkg::bench::SyntheticFunction;
use qkg::gp::{fit_mle, Dataset, HyperBounds, Posterior};
use qkg::optimizer::{sga_maximize, SgaSchedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let q: usize = args.first().map_or(Ok(4), |s| s.parse())?;
    let seed: u64 = args.get(1).map_or(Ok(0), |s| s.parse())?;

    let f = SyntheticFunction::Branin2;
    let domain = f.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..12).map(|_| domain.sample_uniform(&mut rng)).collect();
    let values = points.iter().map(|x| f.eval(x)).collect();
    let data = Dataset::new(points, values)?;
    let fit = fit_mle(&data, &HyperBounds::for_data(&data, &domain), 8, &mut rng, &[])?;
    let post = Posterior::new(data, fit.spec)?;

    let config = BaselineConfig::default();
    let show = |name: &str, b: &Batch| {
        println!("{name}:");
        for z in b.points() {
            println!("  ({:>7.3}, {:>7.3})  mean {:>8.3}  sd {:>7.3}", z[0], z[1], post.mean(z), post.variance(z).max(0.0).sqrt());
        }
    };

    let schedule = SgaSchedule::new(0.3, 10.0, 0.7, 100, 8)?;
    let qei = sga_maximize(
        |b: &Batch, s| qei_gradient(&post, b, 128, s),
        |b: &Batch, s| qei_value(&post, b, 1024, s),
        &domain,
        q,
        &schedule,
        &mut rng,
    )?;
    show(&format!("q-EI (value {:.4})", qei.best_value), &qei.best);
    show("GP-BUCB", &gp_bucb_select(&post, q, &config, 1, &domain, &mut rng)?);
    show("GP-UCB-PE", &gp_ucb_pe_select(&post, q, &config, 1, &domain, &mut rng)?);
    Ok(())
}
