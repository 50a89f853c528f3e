//! Experiment files, CSV output and the commands behind the `qkg` binary.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::{
    log10_regret, median, run_bo_loop, speedup_experiment, Policy, RunConfig, RunTrace,
    SpeedupTable, SyntheticFunction, Tuning,
};
use crate::error::{Error, Result};

/// Column order of every trace CSV.
pub const TRACE_COLUMNS: [&str; 10] = [
    "iteration",
    "evaluations",
    "policy",
    "seed",
    "q",
    "noise_sd",
    "recommended_value",
    "regret",
    "log10_regret",
    "wall_ms",
];

/// Environment variable overriding `--workers`.
pub const WORKERS_ENV: &str = "QKG_WORKERS";

/// An experiment file as written by the user. Everything except the objective
/// and the iteration count has a default.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    objective: SyntheticFunction,
    iterations: usize,
    #[serde(default)]
    policies: Option<Vec<Policy>>,
    #[serde(default)]
    seeds: Option<Vec<u64>>,
    #[serde(default)]
    q: Option<Vec<usize>>,
    #[serde(default)]
    initial: Option<usize>,
    #[serde(default)]
    noise_sd: Option<f64>,
    #[serde(default)]
    discretization_samples: Option<usize>,
    #[serde(default)]
    async_p: Option<usize>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    tuning: Option<Tuning>,
}

/// A parsed experiment with every default made explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub objective: SyntheticFunction,
    pub iterations: usize,
    pub policies: Vec<Policy>,
    pub seeds: Vec<u64>,
    pub q: Vec<usize>,
    pub initial: usize,
    pub noise_sd: f64,
    pub discretization_samples: usize,
    pub async_p: usize,
    pub out: PathBuf,
    pub tuning: Tuning,
}

impl ExperimentFile {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawExperiment = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let d = raw.objective.dim();
        let file = Self {
            objective: raw.objective,
            iterations: raw.iterations,
            policies: raw.policies.unwrap_or_else(|| vec![Policy::Qkg]),
            seeds: raw.seeds.unwrap_or_else(|| vec![0]),
            q: raw.q.unwrap_or_else(|| vec![4]),
            initial: raw.initial.unwrap_or(2 * d + 2),
            noise_sd: raw.noise_sd.unwrap_or(0.0),
            discretization_samples: raw.discretization_samples.unwrap_or(1000),
            async_p: raw.async_p.unwrap_or(0),
            out: raw.out.unwrap_or_else(|| PathBuf::from("results")),
            tuning: raw.tuning.unwrap_or_default(),
        };
        if file.policies.is_empty() || file.seeds.is_empty() || file.q.is_empty() {
            return Err(Error::Config(
                "policies, seeds and q must be nonempty lists".into(),
            ));
        }
        for config in file.run_configs() {
            config.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Every (policy, q, seed) combination, in that nesting order.
    pub fn run_configs(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for &policy in &self.policies {
            for &q in &self.q {
                for &seed in &self.seeds {
                    out.push(RunConfig {
                        objective: self.objective,
                        policy,
                        q,
                        initial: self.initial,
                        iterations: self.iterations,
                        noise_sd: self.noise_sd,
                        discretization_samples: self.discretization_samples,
                        seed,
                        async_p: self.async_p,
                        tuning: self.tuning.clone(),
                    });
                }
            }
        }
        out
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Parses `a..b` (half-open) into the seed list `a, a+1, …, b-1`.
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| Error::InvalidArgument(format!("seed range {s:?} is not of the form a..b")))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<u64>()
            .map_err(|_| Error::InvalidArgument(format!("bad seed {t:?} in range {s:?}")))
    };
    let (a, b) = (parse(a)?, parse(b)?);
    if a >= b {
        return Err(Error::InvalidArgument(format!("empty seed range {s:?}")));
    }
    Ok((a..b).collect())
}

/// Parses a comma-separated list of batch sizes such as `1,2,4`.
pub fn parse_q_list(s: &str) -> Result<Vec<usize>> {
    let list = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|&q| q >= 1)
                .ok_or_else(|| Error::InvalidArgument(format!("bad batch size {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if list.is_empty() {
        return Err(Error::InvalidArgument("empty q list".into()));
    }
    Ok(list)
}

/// Worker count: `QKG_WORKERS` wins over the command-line value.
pub fn resolve_workers(cli: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&k| k >= 1)
            .map(Some)
            .ok_or_else(|| Error::InvalidArgument(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
        Err(_) => Ok(cli),
    }
}

pub fn trace_file_name(config: &RunConfig) -> String {
    format!("trace_{}_q{}_seed{}.csv", config.policy.name(), config.q, config.seed)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn trace_csv(config: &RunConfig, trace: &RunTrace) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_COLUMNS)?;
    for r in &trace.records {
        w.write_record([
            r.iteration.to_string(),
            r.evaluations.to_string(),
            config.policy.name().to_string(),
            config.seed.to_string(),
            config.q.to_string(),
            config.noise_sd.to_string(),
            r.recommended_value.to_string(),
            r.regret.to_string(),
            log10_regret(r.regret).to_string(),
            format!("{:.3}", r.wall_ms),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// The effective configuration of one run, as TOML.
pub fn run_config_toml(config: &RunConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::Config(e.to_string()))
}

pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Debug)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub trace: RunTrace,
    pub error: Option<Error>,
}

/// Quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summary_csv(outcomes: &[RunOutcome]) -> Result<Vec<u8>> {
    // (policy, q) -> evaluations -> log10 regrets
    let mut groups: BTreeMap<(&str, usize), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let mut failed: BTreeMap<(&str, usize), usize> = BTreeMap::new();
    for o in outcomes {
        let key = (o.config.policy.name(), o.config.q);
        if o.error.is_some() {
            *failed.entry(key).or_default() += 1;
        }
        let by_eval = groups.entry(key).or_default();
        for r in &o.trace.records {
            by_eval.entry(r.evaluations).or_default().push(log10_regret(r.regret));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "policy",
        "q",
        "evaluations",
        "runs",
        "median_log10_regret",
        "q25_log10_regret",
        "q75_log10_regret",
        "failed_runs",
    ])?;
    for ((policy, q), by_eval) in &groups {
        let nfail = failed.get(&(*policy, *q)).copied().unwrap_or(0);
        for (evals, values) in by_eval {
            let mut v = values.clone();
            v.sort_by(|a, b| a.total_cmp(b));
            w.write_record([
                policy.to_string(),
                q.to_string(),
                evals.to_string(),
                v.len().to_string(),
                median(&v).to_string(),
                quantile(&v, 0.25).to_string(),
                quantile(&v, 0.75).to_string(),
                nfail.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn speedup_csv(table: &SpeedupTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["q", "iteration", "evaluations", "runs", "median_regret", "log10_median_regret"])?;
    for r in &table.rows {
        w.write_record([
            r.q.to_string(),
            r.iteration.to_string(),
            r.evaluations.to_string(),
            r.runs.to_string(),
            r.median_regret.to_string(),
            log10_regret(r.median_regret).to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Failure of a command, tagged with the process exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("runtime: {0}")]
    Runtime(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Usage(_) => 1,
            CommandError::Config(_) => 2,
            CommandError::Runtime(_) => 3,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CommandError {
    CommandError::Runtime(e.to_string())
}

fn load_config(path: &Path) -> std::result::Result<ExperimentFile, CommandError> {
    match ExperimentFile::load(path) {
        Ok(f) => Ok(f),
        Err(Error::Io(e)) => Err(CommandError::Usage(format!("cannot read {}: {e}", path.display()))),
        Err(e) => Err(CommandError::Config(e.to_string())),
    }
}

fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> std::result::Result<T, CommandError> {
    let workers = resolve_workers(workers).map_err(|e| CommandError::Usage(e.to_string()))?;
    match workers {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(runtime)?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn refuse_existing(paths: &[PathBuf], force: bool) -> std::result::Result<(), CommandError> {
    if force {
        return Ok(());
    }
    if let Some(p) = paths.iter().find(|p| p.exists()) {
        return Err(CommandError::Usage(format!(
            "{} already exists; pass --force to overwrite",
            p.display()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed_range: Option<String>,
    pub out: Option<PathBuf>,
    pub force: bool,
    pub workers: Option<usize>,
}

/// Report of a finished `run` command.
#[derive(Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub trace_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
    pub failures: usize,
}

/// Executes every (policy, q, seed) run in `config_path`, writing one trace CSV
/// (plus its effective-config sidecar) per run and one summary CSV.
pub fn cmd_run(config_path: &Path, opts: &RunOptions) -> std::result::Result<RunReport, CommandError> {
    let mut file = load_config(config_path)?;
    if let Some(range) = &opts.seed_range {
        file.seeds = parse_seed_range(range).map_err(|e| CommandError::Usage(e.to_string()))?;
    }
    if let Some(out) = &opts.out {
        file.out = out.clone();
    }
    let out_dir = file.out.clone();
    let configs = file.run_configs();
    let trace_files: Vec<PathBuf> = configs.iter().map(|c| out_dir.join(trace_file_name(c))).collect();
    let summary_file = out_dir.join("summary.csv");
    let mut targets = trace_files.clone();
    targets.push(summary_file.clone());
    refuse_existing(&targets, opts.force)?;
    fs::create_dir_all(&out_dir).map_err(runtime)?;
    write_atomic(&out_dir.join("experiment.toml"), file.to_toml().map_err(runtime)?.as_bytes())
        .map_err(runtime)?;

    let outcomes: Vec<RunOutcome> = with_workers(opts.workers, || {
        configs
            .par_iter()
            .map(|config| match run_bo_loop(config) {
                Ok(trace) => RunOutcome { config: config.clone(), trace, error: None },
                Err(f) => RunOutcome { config: config.clone(), trace: f.partial, error: Some(f.error) },
            })
            .collect()
    })?;

    let mut failures = 0;
    for (o, path) in outcomes.iter().zip(&trace_files) {
        if let Some(e) = &o.error {
            failures += 1;
            eprintln!("run {} failed: {e}", trace_file_name(&o.config));
        }
        write_atomic(path, &trace_csv(&o.config, &o.trace).map_err(runtime)?).map_err(runtime)?;
        let sidecar = path.with_extension("config.toml");
        write_atomic(&sidecar, run_config_toml(&o.config).map_err(runtime)?.as_bytes()).map_err(runtime)?;
    }
    write_atomic(&summary_file, &summary_csv(&outcomes).map_err(runtime)?).map_err(runtime)?;
    if failures > 0 {
        return Err(CommandError::Runtime(format!(
            "{failures} of {} runs failed; partial traces written to {}",
            outcomes.len(),
            out_dir.display()
        )));
    }
    Ok(RunReport { out_dir, trace_files, summary_file, failures })
}

#[derive(Debug, Clone, Default)]
pub struct SpeedupOptions {
    pub q_list: String,
    pub out: Option<PathBuf>,
    pub force: bool,
    pub workers: Option<usize>,
}

/// Runs q-KG across the batch sizes in `--q` for the config's objective, seeds
/// and noise level; writes `speedup.csv`.
pub fn cmd_speedup(
    config_path: &Path,
    opts: &SpeedupOptions,
) -> std::result::Result<(PathBuf, SpeedupTable), CommandError> {
    let q_list = parse_q_list(&opts.q_list).map_err(|e| CommandError::Usage(e.to_string()))?;
    let file = load_config(config_path)?;
    let out_dir = opts.out.clone().unwrap_or_else(|| file.out.clone());
    let path = out_dir.join("speedup.csv");
    refuse_existing(std::slice::from_ref(&path), opts.force)?;
    let template = file
        .run_configs()
        .into_iter()
        .next()
        .expect("validated experiment has at least one run");
    let table = with_workers(opts.workers, || {
        speedup_experiment(file.objective, &q_list, &file.seeds, file.noise_sd, &template)
    })?
    .map_err(runtime)?;
    fs::create_dir_all(&out_dir).map_err(runtime)?;
    write_atomic(&path, &speedup_csv(&table).map_err(runtime)?).map_err(runtime)?;
    Ok((path, table))
}
