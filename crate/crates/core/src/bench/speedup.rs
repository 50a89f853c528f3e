//! Regret-per-iteration tables across batch sizes.

use rayon::prelude::*;
use serde::Serialize;

use crate::bench::run::{run_bo_loop, Policy, RunConfig, RunTrace};
use crate::bench::objectives::SyntheticFunction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedupRow {
    pub q: usize,
    pub iteration: usize,
    pub evaluations: usize,
    pub median_regret: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeedupTable {
    pub rows: Vec<SpeedupRow>,
}

impl SpeedupTable {
    pub fn median_at(&self, q: usize, iteration: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.q == q && r.iteration == iteration)
            .map(|r| r.median_regret)
    }
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs q-KG for every `q` in `q_list` and every seed, using `template` for the
/// remaining settings, and tabulates median regret per iteration.
/// Iteration 0 is the initial design.
pub fn speedup_experiment(
    objective: SyntheticFunction,
    q_list: &[usize],
    seeds: &[u64],
    noise_sd: f64,
    template: &RunConfig,
) -> Result<SpeedupTable> {
    if q_list.is_empty() {
        return Err(Error::InvalidArgument("q_list must be nonempty".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("seeds must be nonempty".into()));
    }
    let jobs: Vec<(usize, u64)> = q_list
        .iter()
        .flat_map(|&q| seeds.iter().map(move |&s| (q, s)))
        .collect();
    let traces: Vec<Result<RunTrace>> = jobs
        .par_iter()
        .map(|&(q, seed)| {
            let config = RunConfig {
                objective,
                policy: Policy::Qkg,
                q,
                noise_sd,
                seed,
                async_p: 0,
                ..template.clone()
            };
            run_bo_loop(&config).map_err(|f| f.error)
        })
        .collect();
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;

    let mut table = SpeedupTable::default();
    for (qi, &q) in q_list.iter().enumerate() {
        let group = &traces[qi * seeds.len()..(qi + 1) * seeds.len()];
        for it in 0..=template.iterations {
            let regrets: Vec<f64> = group.iter().map(|t| t.records[it].regret).collect();
            table.rows.push(SpeedupRow {
                q,
                iteration: it,
                evaluations: group[0].records[it].evaluations,
                median_regret: median(&regrets),
                runs: regrets.len(),
            });
        }
    }
    Ok(table)
}
