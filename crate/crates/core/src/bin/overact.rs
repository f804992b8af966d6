use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use overact::harness::config::{Baseline, ExperimentConfig};
use overact::harness::experiment::{all_failed, run_experiment, summarize_run, write_json, write_outputs, RunOptions};
use overact::harness::{benchmark, resolve, selfcheck};
use overact::{Error, Result};

#[derive(Parser)]
#[command(name = "overact", version, about = "Adaptive LQR with actuating-mode exploration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Switching,
    Full,
    Both,
}

impl BaselineArg {
    fn baselines(self) -> Vec<Baseline> {
        match self {
            BaselineArg::Switching => vec![Baseline::Switching],
            BaselineArg::Full => vec![Baseline::FullActuation],
            BaselineArg::Both => vec![Baseline::Switching, Baseline::FullActuation],
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Select the exploration mode and its exploration length.
    Plan {
        #[arg(long)]
        config: PathBuf,
        /// Also write plan.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured experiment.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        /// Master seed for the trial seeds.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        baseline: Option<BaselineArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in three-actuator benchmark with both baselines.
    ReproducePaper {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run the numerical oracle checks.
    Selfcheck,
}

fn simulate(config: ExperimentConfig, out: &Path) -> Result<()> {
    let resolved = resolve(&config)?;
    let run = run_experiment(&resolved, &RunOptions::from_config(&resolved))?;
    let summary = summarize_run(&resolved, &run, config.master_seed);
    write_outputs(out, &resolved, &run, &summary)?;
    for b in &summary.baselines {
        let slope = b.regret_slope.map_or("n/a".to_string(), |s| format!("{s:.3}"));
        println!(
            "{:<15} mode {:<8} failed {}/{}  median max |x| (exploration) {:.4}  regret slope {}",
            b.baseline, b.mode, b.failed_trials, b.trials, b.median_max_state_norm_exploration, slope
        );
        for t in b.per_trial.iter().filter(|t| t.failed) {
            eprintln!("  trial {} failed: {}", t.trial, t.error.as_deref().unwrap_or("unknown"));
        }
    }
    println!(
        "planner: mode {} with T_c = {}; simulated exploration length {}{}",
        summary.planner_mode,
        summary.planner_t_c,
        summary.exploration_steps,
        if summary.exploration_override { " (configured)" } else { "" }
    );
    println!("outputs written to {}", out.display());
    if all_failed(&run) {
        return Err(Error::Config("every trial failed".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Plan { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let resolved = resolve(&cfg)?;
            let plan = resolved.plan()?;
            println!("{}", serde_json::to_string_pretty(&plan).expect("plan serializes"));
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
                write_json(&dir.join("plan.json"), &plan)?;
            }
            Ok(())
        }
        Command::Simulate {
            config,
            trials,
            seed,
            baseline,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(k) = trials {
                cfg.trials = k;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(b) = baseline {
                cfg.baselines = b.baselines();
            }
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            cfg.validate()?;
            simulate(cfg, &out)
        }
        Command::ReproducePaper { out, trials } => {
            let mut cfg = benchmark::config();
            if let Some(k) = trials {
                cfg.trials = k;
            }
            std::fs::create_dir_all(&out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
            write_json(&out.join("config.json"), &cfg)?;
            simulate(cfg, &out)
        }
        Command::Selfcheck => {
            let results = selfcheck::run_all();
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if results.iter().all(|r| r.passed) {
                Ok(())
            } else {
                Err(Error::Config("self-check failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
