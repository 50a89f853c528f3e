//! Median regret by iteration for several batch sizes on a noisy benchmark.
//!
//! ```text
//! cargo run --release --example speedup -- [objective] [iterations] [seeds]
//! ```

use qkg::bench::{log10_regret, speedup_experiment, Policy, RunConfig, SyntheticFunction};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let objective = SyntheticFunction::parse(args.first().map_or("branin2", |s| s.as_str()))?;
    let iterations: usize = args.get(1).map_or(Ok(6), |s| s.parse())?;
    let n_seeds: u64 = args.get(2).map_or(Ok(4), |s| s.parse())?;

    let mut template = RunConfig::new(objective, Policy::Qkg, iterations, 0);
    template.discretization_samples = 200;
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let table = speedup_experiment(objective, &[1, 2, 4], &seeds, 0.5, &template)?;

    println!("{:>5} {:>8} {:>8} {:>8}", "iter", "q=1", "q=2", "q=4");
    for it in 0..=iterations {
        let cell = |q| table.median_at(q, it).map_or("-".to_string(), |r| format!("{:.3}", log10_regret(r)));
        println!("{:>5} {:>8} {:>8} {:>8}", it, cell(1), cell(2), cell(4));
    }
    Ok(())
}
