//! Monte Carlo estimate of the parallel knowledge gradient and its gradient
//! for a hand-picked batch, including the effect of pending evaluations.
//!
//! ```text
//! cargo run --release --example qkg_estimate -- [n_mc] [seed]
//! ```

use qkg::acquisition::{qkg_async, qkg_gradient, qkg_value, Batch};
use qkg::bench::SyntheticFunction;
use qkg::gp::{fit_mle, Dataset, HyperBounds, Posterior};
use qkg::sampling::build_discretization;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_mc: usize = args.first().map_or(Ok(2000), |s| s.parse())?;
    let seed: u64 = args.get(1).map_or(Ok(0), |s| s.parse())?;

    let f = SyntheticFunction::Branin2;
    let domain = f.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..12).map(|_| domain.sample_uniform(&mut rng)).collect();
    let values = points.iter().map(|x| f.eval(x)).collect();
    let data = Dataset::new(points, values)?;
    let fit = fit_mle(&data, &HyperBounds::for_data(&data, &domain), 8, &mut rng, &[])?;
    let post = Posterior::new(data, fit.spec)?;

    let batch = Batch::new(vec![vec![-3.0, 12.0], vec![3.0, 2.5], vec![9.0, 2.5]])?;
    let disc = build_discretization(&post, &batch, 200, 500, &domain, &mut rng)?;
    println!("discretization: {} points", disc.len());

    let value = qkg_value(&post, &batch, &disc, n_mc, seed)?;
    println!("q-KG = {:.5} ± {:.5}", value.value, value.value_stderr);

    let grad = qkg_gradient(&post, &batch, &disc, n_mc, seed)?;
    let g = grad.gradient.expect("gradient estimate");
    for (k, z) in batch.points().iter().enumerate() {
        println!("  z{k} = {z:?}   dKG/dz = {:?}", g[k]);
    }

    // the same first point when the other two are already being evaluated
    let single = Batch::new(vec![batch.points()[0].clone()])?;
    let alone = qkg_value(&post, &single, &disc, n_mc, seed)?;
    let pending = qkg_async(&post, &single, &batch.points()[1..], &disc, n_mc, seed)?;
    println!("q-KG of z0 alone = {:.5}, stacked over pending z1, z2 = {:.5}", alone.value, pending.value);
    Ok(())
}
