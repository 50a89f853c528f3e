//! Multi-start stochastic gradient ascent on a noisy concave quadratic over
//! a batch of points, showing each trajectory's start and end.
//!
//! ```text
//! cargo run --release --example sga_optimizer -- [noise] [seed]
//! ```

use qkg::acquisition::{Batch, StochasticEstimate};
use qkg::optimizer::{sga_maximize, SgaSchedule};
use qkg::sampling::BoxDomain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const TARGET: [f64; 2] = [0.25, -0.5];

fn estimate(batch: &Batch, seed: u64, noise: f64, with_gradient: bool) -> qkg::Result<StochasticEstimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let value = -batch
        .points()
        .iter()
        .flat_map(|z| z.iter().zip(TARGET).map(|(a, b)| (a - b).powi(2)))
        .sum::<f64>();
    let gradient: Vec<Vec<f64>> = batch
        .points()
        .iter()
        .map(|z| {
            z.iter()
                .zip(TARGET)
                .map(|(a, b)| -2.0 * (a - b) + noise * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    Ok(StochasticEstimate {
        value,
        value_stderr: 0.0,
        gradient: with_gradient.then(|| gradient.clone()),
        gradient_stderr: with_gradient.then(|| vec![vec![noise; 2]; gradient.len()]),
        n_mc: 1,
        seed,
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let noise: f64 = args.first().map_or(Ok(0.5), |s| s.parse())?;
    let seed: u64 = args.get(1).map_or(Ok(0), |s| s.parse())?;

    let domain = BoxDomain::cube(2, -1.0, 1.0)?;
    let schedule = SgaSchedule::new(0.3, 10.0, 0.7, 200, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = sga_maximize(
        |b: &Batch, s| estimate(b, s, noise, true),
        |b: &Batch, s| estimate(b, s, noise, false),
        &domain,
        2,
        &schedule,
        &mut rng,
    )?;
    for (k, t) in out.trajectories.iter().enumerate() {
        println!("start {k}: {:?} -> {:?}  value {:?}", t.start.points(), t.end.points(), t.end_value);
    }
    println!("best: {:?} (value {:.3e}); optimum is both points at {TARGET:?}", out.best.points(), out.best_value);
    Ok(())
}
