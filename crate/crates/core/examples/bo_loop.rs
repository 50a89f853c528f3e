//! Full optimization loop on a synthetic benchmark.
//!
//! ```text
//! cargo run --release --example bo_loop -- [objective] [policy] [iterations] [seed] [noise_sd]
//! cargo run --release --example bo_loop -- branin2 qkg 10 0 0.0
//! ```

use qkg::bench::{log10_regret, run_bo_loop, Policy, RunConfig, SyntheticFunction};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let objective = SyntheticFunction::parse(&arg(0, "branin2"))?;
    let policy = Policy::parse(&arg(1, "qkg"))?;
    let iterations: usize = arg(2, "10").parse()?;
    let seed: u64 = arg(3, "0").parse()?;
    let noise_sd: f64 = arg(4, "0.0").parse()?;

    let mut config = RunConfig::new(objective, policy, iterations, seed);
    config.noise_sd = noise_sd;
    if objective == SyntheticFunction::Branin2 {
        config.initial = 6;
    }
    println!(
        "{} / {} / q={} / I={} / N={} / noise_sd={}",
        objective.name(),
        policy.name(),
        config.q,
        config.initial,
        config.iterations,
        config.noise_sd
    );
    let trace = run_bo_loop(&config)?;
    println!("{:>4} {:>6} {:>14} {:>10} {:>10}", "iter", "evals", "f(x*)", "log10 reg", "ms");
    for r in &trace.records {
        println!(
            "{:>4} {:>6} {:>14.6} {:>10.3} {:>10.1}",
            r.iteration,
            r.evaluations,
            r.recommended_value,
            log10_regret(r.regret),
            r.wall_ms
        );
    }
    println!("final recommendation: {:?}", trace.final_recommendation);
    Ok(())
}
