//! Synthetic benchmarks, the optimization loop and the batch-size speed-up
//! experiment.

mod objectives;
mod run;
mod speedup;

pub use objectives::{
    ackley, branin, eval_objective, hartmann6, observe, rosenbrock, Objective, SyntheticFunction,
    SyntheticObjective, BRANIN_MIN, HARTMANN6_MIN,
};
pub use run::{
    recommend, run_bo_loop, run_bo_loop_with, IterationRecord, Policy, RunConfig, RunFailure,
    RunTrace, Tuning,
};
pub use speedup::{median, speedup_experiment, SpeedupRow, SpeedupTable};

/// Floor for `log10` of a zero regret.
pub const LOG10_REGRET_FLOOR: f64 = -12.0;

pub fn log10_regret(regret: f64) -> f64 {
    if regret > 0.0 {
        regret.log10().max(LOG10_REGRET_FLOOR)
    } else {
        LOG10_REGRET_FLOOR
    }
}
