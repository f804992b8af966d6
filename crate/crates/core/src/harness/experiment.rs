//! Multi-trial runs of one or both baselines and their output files.

use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibrate::ModeCalibration;
use super::config::Baseline;
use super::summary::{summarize, BaselineContext, BaselineSummary, TrialView};
use super::ResolvedExperiment;
use crate::controller::{run_episode_logged, EpisodeConfig};
use crate::error::{Error, Result};
use crate::mode::ActuationMode;
use crate::planner::ExplorationPlan;
use crate::simulator::RegretLedger;

/// Environment variable holding the worker count for trial fan-out.
pub const WORKERS_ENV: &str = "OVERACT_WORKERS";

pub const CSV_HEADER: [&str; 12] = [
    "t",
    "mode_id",
    "state_norm",
    "cost",
    "cum_regret",
    "log_det_V",
    "lambda_min_V",
    "est_error",
    "beta",
    "switched",
    "alpha_bound",
    "good_event",
];

/// Seed of trial k: the k-th stream of a generator keyed by the master seed.
pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

#[derive(Debug, Clone)]
pub struct TrialRun {
    pub trial: usize,
    pub seed: u64,
    pub ledger: RegretLedger,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub baseline: Baseline,
    pub mode: ActuationMode,
    pub trials: Vec<TrialRun>,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub plan: ExplorationPlan,
    pub exploration_steps: usize,
    pub exploration_override: bool,
    pub runs: Vec<BaselineRun>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub horizon: usize,
    pub trials: usize,
    pub master_seed: u64,
    /// Exploration length actually simulated.
    pub exploration_steps: usize,
    /// True when `exploration_steps` came from the configuration rather than
    /// the planner.
    pub exploration_override: bool,
    pub planner_mode: String,
    pub planner_t_c: u64,
    pub planner_predicted_state_bound: f64,
    pub baselines: Vec<BaselineSummary>,
    /// Trials in which the switching baseline's largest exploration state
    /// norm did not exceed the full-actuation one.
    pub switching_not_worse: Option<usize>,
    pub compared_trials: Option<usize>,
}

pub struct RunOptions {
    pub trials: usize,
    pub master_seed: u64,
    pub baselines: Vec<Baseline>,
}

impl RunOptions {
    pub fn from_config(resolved: &ResolvedExperiment) -> Self {
        Self {
            trials: resolved.config.trials,
            master_seed: resolved.config.master_seed,
            baselines: resolved.config.baselines.clone(),
        }
    }
}

/// Episode settings for one trial with exploration in `explore_mode`.
pub fn episode_config(
    resolved: &ResolvedExperiment,
    plan: &ExplorationPlan,
    explore_mode: &ActuationMode,
    exploration_steps: usize,
    seed: u64,
) -> EpisodeConfig {
    let c_ci = plan
        .candidates
        .iter()
        .find(|c| c.mode_id == explore_mode.id)
        .map_or(plan.constants.c_ci, |c| c.constants.c_ci);
    let mut noise = resolved.noise.clone();
    noise.seed = seed;
    EpisodeConfig {
        plant: resolved.plant.clone(),
        noise,
        lambda: resolved.config.lambda,
        delta: resolved.config.delta,
        horizon: resolved.config.horizon,
        exploration_steps,
        explore_mode: explore_mode.clone(),
        full_mode: resolved.full_mode().clone(),
        ofu: resolved.config.ofu.clone(),
        state_cap: resolved.config.state_cap,
        planner: resolved.planner.clone(),
        c_ci,
    }
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let k: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(k.max(1));
    }
    builder.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Plans, then runs every requested baseline over the same trial seeds.
pub fn run_experiment(resolved: &ResolvedExperiment, opts: &RunOptions) -> Result<ExperimentRun> {
    if opts.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let plan = resolved.plan()?;
    let (exploration_steps, exploration_override) = match resolved.config.exploration_steps {
        Some(k) => (k, true),
        None => {
            let t_c = usize::try_from(plan.t_c).unwrap_or(usize::MAX);
            if t_c >= resolved.config.horizon {
                return Err(Error::Config(format!(
                    "planned exploration length {t_c} does not fit in the horizon {}; set exploration_steps to override",
                    resolved.config.horizon
                )));
            }
            (t_c, false)
        }
    };
    let mut baselines = opts.baselines.clone();
    baselines.sort();
    baselines.dedup();
    let jobs: Vec<(Baseline, usize)> = baselines
        .iter()
        .flat_map(|&b| (0..opts.trials).map(move |k| (b, k)))
        .collect();
    let mode_for = |b: Baseline| match b {
        Baseline::Switching => plan.mode.clone(),
        Baseline::FullActuation => resolved.full_mode().clone(),
    };
    let pool = worker_pool()?;
    let results: Vec<(Baseline, TrialRun)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(b, k)| {
                let seed = trial_seed(opts.master_seed, k);
                let cfg = episode_config(resolved, &plan, &mode_for(b), exploration_steps, seed);
                let (ledger, err) = run_episode_logged(&cfg);
                (
                    b,
                    TrialRun {
                        trial: k,
                        seed,
                        ledger,
                        error: err.map(|e| e.to_string()),
                    },
                )
            })
            .collect()
    });
    let runs = baselines
        .iter()
        .map(|&b| BaselineRun {
            baseline: b,
            mode: mode_for(b),
            trials: results.iter().filter(|(rb, _)| *rb == b).map(|(_, t)| t.clone()).collect(),
        })
        .collect();
    Ok(ExperimentRun {
        plan,
        exploration_steps,
        exploration_override,
        runs,
    })
}

pub fn summarize_run(resolved: &ResolvedExperiment, run: &ExperimentRun, master_seed: u64) -> ExperimentSummary {
    let n = resolved.plant.n();
    let d = resolved.plant.d();
    let baselines: Vec<BaselineSummary> = run
        .runs
        .iter()
        .map(|br| {
            let ctx = BaselineContext {
                baseline: br.baseline.name(),
                mode_id: br.mode.id,
                mode: br.mode.label(),
                exploration_steps: run.exploration_steps,
                horizon: resolved.config.horizon,
                p_explore: n + br.mode.d_i(),
                p_central: n + d,
                lambda: resolved.config.lambda,
            };
            let views: Vec<TrialView<'_>> = br
                .trials
                .iter()
                .map(|t| TrialView {
                    trial: t.trial,
                    seed: t.seed,
                    ledger: &t.ledger,
                    error: t.error.as_deref(),
                })
                .collect();
            summarize(&ctx, &views)
        })
        .collect();
    let find = |name: &str| baselines.iter().find(|b| b.baseline == name);
    let (not_worse, compared) = match (find("switching"), find("full_actuation")) {
        (Some(s), Some(f)) => {
            let pairs: Vec<(f64, f64)> = s
                .per_trial
                .iter()
                .zip(&f.per_trial)
                .filter(|(a, b)| !a.failed && !b.failed)
                .map(|(a, b)| (a.max_state_norm_exploration, b.max_state_norm_exploration))
                .collect();
            (Some(pairs.iter().filter(|(a, b)| a <= b).count()), Some(pairs.len()))
        }
        _ => (None, None),
    };
    ExperimentSummary {
        horizon: resolved.config.horizon,
        trials: run.runs.first().map_or(0, |r| r.trials.len()),
        master_seed,
        exploration_steps: run.exploration_steps,
        exploration_override: run.exploration_override,
        planner_mode: run.plan.mode.label(),
        planner_t_c: run.plan.t_c,
        planner_predicted_state_bound: run.plan.predicted_state_bound,
        baselines,
        switching_not_worse: not_worse,
        compared_trials: compared,
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn write_trial_csv(path: &Path, ledger: &RegretLedger) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| io_err(path, e))?;
    for r in &ledger.records {
        w.write_record([
            r.t.to_string(),
            r.mode_id.to_string(),
            r.state_norm.to_string(),
            r.cost.to_string(),
            r.cum_regret.to_string(),
            r.log_det_v.to_string(),
            r.lambda_min_v.to_string(),
            r.est_error.to_string(),
            r.beta.to_string(),
            u8::from(r.switched).to_string(),
            r.alpha_bound.to_string(),
            u8::from(r.within_good_event).to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes `plan.json`, `summary.json`, `calibration.json` (when side
/// information was calibrated) and `<baseline>/trial_<k>.csv`.
pub fn write_outputs(
    out_dir: &Path,
    resolved: &ResolvedExperiment,
    run: &ExperimentRun,
    summary: &ExperimentSummary,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    write_json(&out_dir.join("plan.json"), &run.plan)?;
    write_json(&out_dir.join("summary.json"), summary)?;
    if !resolved.calibration.is_empty() {
        let cal: &Vec<ModeCalibration> = &resolved.calibration;
        write_json(&out_dir.join("calibration.json"), cal)?;
    }
    for br in &run.runs {
        let dir = out_dir.join(br.baseline.name());
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        for t in &br.trials {
            write_trial_csv(&dir.join(format!("trial_{}.csv", t.trial)), &t.ledger)?;
        }
    }
    Ok(())
}

/// True when every trial of every baseline failed.
pub fn all_failed(run: &ExperimentRun) -> bool {
    run.runs.iter().all(|r| r.trials.iter().all(|t| t.error.is_some()))
}
