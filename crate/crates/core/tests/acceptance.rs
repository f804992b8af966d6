//! Acceptance suite: prints one PASS/FAIL line per criterion. Exits nonzero
//! on any failure only when OVERACT_ACCEPTANCE_STRICT=1.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rayon::prelude::*;

use overact::controller::run_episode_logged;
use overact::harness::config::Baseline;
use overact::harness::experiment::{episode_config, run_experiment, summarize_run, trial_seed, RunOptions};
use overact::harness::summary::{loglog_slope, median, switch_bound};
use overact::harness::{benchmark, resolve, selfcheck, ResolvedExperiment};
use overact::simulator::{Phase, RegretLedger};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn benchmark_resolved(edit: impl FnOnce(&mut overact::harness::config::ExperimentConfig)) -> ResolvedExperiment {
    let mut cfg = benchmark::config();
    edit(&mut cfg);
    resolve(&cfg).expect("benchmark config resolves")
}

/// Runs `trials` switching-mode episodes of `resolved` with the given
/// exploration length. Failed episodes keep their partial ledgers.
fn switching_episodes(resolved: &ResolvedExperiment, exploration_steps: usize, trials: usize, master: u64) -> Vec<Episode> {
    let plan = resolved.plan().expect("plan");
    (0..trials)
        .into_par_iter()
        .map(|k| {
            let cfg = episode_config(resolved, &plan, &plan.mode, exploration_steps, trial_seed(master, k));
            let (ledger, err) = run_episode_logged(&cfg);
            Episode {
                ledger,
                failed: err.is_some(),
            }
        })
        .collect()
}

struct Episode {
    ledger: RegretLedger,
    failed: bool,
}

fn completed(episodes: &[Episode]) -> Vec<&RegretLedger> {
    episodes.iter().filter(|e| !e.failed).map(|e| &e.ledger).collect()
}

fn switch_bound_holds(ledger: &RegretLedger, t_c: usize, p_explore: usize, p_central: usize) -> bool {
    switch_bound(ledger, t_c, p_explore, p_central, 1.0).is_some_and(|b| ledger.switch_count as f64 <= b)
}

fn c1_dare() -> Outcome {
    match selfcheck::check_dare_benchmark() {
        Ok(c) => outcome(
            c.residual <= 1e-9 && c.max_gain_diff <= 1e-6 && c.closed_loop_radius < 1.0 && c.seconds < 1.0,
            format!(
                "residual {:.2e}, max |K - K_ref| {:.2e}, rho(A+BK) {:.4}, {:.2e} s",
                c.residual, c.max_gain_diff, c.closed_loop_radius, c.seconds
            ),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn c2_gradient() -> Outcome {
    match selfcheck::check_gradient(5, 2024, 1e-6) {
        Ok(err) => outcome(err <= 1e-4, format!("max relative error {err:.2e} over 5 parameters")),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn c3_consistency() -> Outcome {
    let horizon = 10_000;
    let resolved = benchmark_resolved(|c| c.exploration_steps = None);
    let episodes = switching_episodes(&resolved, horizon - 1, 10, 300);
    let slopes: Vec<f64> = completed(&episodes)
        .into_iter()
        .filter_map(|l| loglog_slope(l.records.iter().filter(|r| r.t >= 100).map(|r| (r.t as f64, r.est_error))))
        .collect();
    let m = median(&slopes);
    outcome(
        slopes.len() == 10 && (-0.65..=-0.35).contains(&m),
        format!("median slope {m:.3} (per-seed {:?})", slopes.iter().map(|s| (s * 1000.0).round() / 1000.0).collect::<Vec<_>>()),
    )
}

fn c4_containment(episodes: &[Episode]) -> Outcome {
    let inside = episodes
        .iter()
        .filter(|e| {
            !e.failed
                && e.ledger
                    .records
                .iter()
                .all(|r| r.conf_ratio <= 1.0 && (r.phase != Phase::Explore || r.conf_ratio_mode <= 1.0))
        })
        .count();
    let needed = (episodes.len() as f64 * 0.9).ceil() as usize;
    outcome(
        inside >= needed,
        format!(
            "{inside}/{} trials kept the truth inside both sets (need {needed}; {} diverged)",
            episodes.len(),
            episodes.iter().filter(|e| e.failed).count()
        ),
    )
}

fn c5_excitation() -> Outcome {
    let t_c = benchmark::EXPLORATION_STEPS;
    let resolved = benchmark_resolved(|_| {});
    let episodes = switching_episodes(&resolved, t_c, 10, 500);
    let half = t_c.div_ceil(2);
    let ratios: Vec<(f64, f64)> = episodes
        .iter()
        .map(|e| &e.ledger)
        .map(|l| {
            let at = |t: usize| l.records[t].lambda_min_v / t as f64;
            (at(t_c), at(half))
        })
        .collect();
    let ok = ratios.iter().all(|&(end, mid)| end > 0.0 && (end / mid - 1.0).abs() <= 0.5);
    let rel: Vec<f64> = ratios.iter().map(|(e, m)| (e / m * 100.0).round() / 100.0).collect();
    outcome(ok, format!("ratio of lambda_min(V_t)/t at T_c to T_c/2 per seed: {rel:?}"))
}

fn c6_c7_c8_reproduction(extra: &[Episode]) -> (Outcome, Outcome, Outcome) {
    let start = Instant::now();
    let resolved = benchmark_resolved(|_| {});
    let opts = RunOptions {
        trials: benchmark::TRIALS,
        master_seed: 0,
        baselines: vec![Baseline::Switching, Baseline::FullActuation],
    };
    let run = run_experiment(&resolved, &opts).expect("benchmark runs");
    let summary = summarize_run(&resolved, &run, 0);
    let secs = start.elapsed().as_secs_f64();
    let not_worse = summary.switching_not_worse.unwrap_or(0);
    let compared = summary.compared_trials.unwrap_or(0);
    let c6 = outcome(
        compared == benchmark::TRIALS && not_worse >= 7 && secs <= 600.0,
        format!(
            "mode {} max |x| during exploration not above full actuation in {not_worse}/{compared} seeds ({secs:.1} s)",
            summary.planner_mode
        ),
    );
    let switching = summary.baselines.iter().find(|b| b.baseline == "switching").expect("switching baseline");
    let slope = switching.regret_slope.unwrap_or(f64::NAN);
    let c7 = outcome(
        (0.35..=0.65).contains(&slope),
        format!(
            "slope {slope:.3} over [T_c, T]; median regret {:.1} at T_c, {:.1} at T",
            switching.median_regret_curve[run.exploration_steps],
            switching.median_final_regret
        ),
    );
    let n = resolved.plant.n();
    let d = resolved.plant.d();
    let mut checked = 0;
    let mut held = 0;
    let mut skipped = 0;
    for br in &run.runs {
        for t in &br.trials {
            if t.error.is_some() {
                skipped += 1;
                continue;
            }
            checked += 1;
            held += usize::from(switch_bound_holds(&t.ledger, run.exploration_steps, n + br.mode.d_i(), n + d));
        }
    }
    let p_explore = n + run.plan.mode.d_i();
    skipped += extra.iter().filter(|e| e.failed).count();
    for l in completed(extra) {
        checked += 1;
        held += usize::from(switch_bound_holds(l, benchmark::EXPLORATION_STEPS, p_explore, n + d));
    }
    let c8 = outcome(held == checked, format!("bound held on {held}/{checked} completed episodes ({skipped} diverged, not checked)"));
    (c6, c7, c8)
}

fn c9_projection() -> Outcome {
    match selfcheck::check_projection(50, 99) {
        Ok(c) => outcome(
            c.max_point_error <= 1e-3 && c.max_boundary_residual <= 1e-8,
            format!(
                "max deviation from grid {:.2e}, boundary residual {:.2e}",
                c.max_point_error, c.max_boundary_residual
            ),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn c10_planner() -> Outcome {
    let resolved = benchmark_resolved(|_| {});
    match resolved.plan() {
        Ok(plan) => {
            let label = plan.mode.label();
            outcome(
                label == "{1,2}" && (25..=100).contains(&plan.t_c),
                format!("mode {label}, T_c = {} (benchmark value 50)", plan.t_c),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for sub in ["switching", "full_actuation"] {
        let d = dir.join(sub);
        for k in 0..3 {
            let p = d.join(format!("trial_{k}.csv"));
            files.push((format!("{sub}/trial_{k}.csv"), std::fs::read(&p).unwrap_or_default()));
        }
    }
    files
}

fn c11_determinism() -> Outcome {
    let tmp = tempfile::tempdir().expect("temp dir");
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.json");
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_overact"))
            .args(["simulate", "--config"])
            .arg(&config)
            .args(["--trials", "3", "--seed", "7", "--out"])
            .arg(&out)
            .output()
            .expect("binary runs");
        (status.status.success(), read_tree(&out))
    };
    let (ok_a, a) = run("a");
    let (ok_b, b) = run("b");
    let nonempty = a.iter().all(|(_, bytes)| !bytes.is_empty());
    outcome(
        ok_a && ok_b && nonempty && a == b,
        format!("{} CSV files compared, identical: {}", a.len(), a == b),
    )
}

fn main() {
    let containment_resolved = benchmark_resolved(|c| {
        c.delta = 0.05;
        c.horizon = 500;
    });
    let containment = switching_episodes(&containment_resolved, benchmark::EXPLORATION_STEPS, 200, 400);
    let (c6, c7, c8) = c6_c7_c8_reproduction(&containment);
    let results = [
        ("DARE correctness", c1_dare()),
        ("gradient check", c2_gradient()),
        ("estimator consistency", c3_consistency()),
        ("confidence containment", c4_containment(&containment)),
        ("excitation linearity", c5_excitation()),
        ("state norm: mode vs full actuation", c6),
        ("regret shape", c7),
        ("switch-count bound", c8),
        ("projection oracle", c9_projection()),
        ("planner soft target", c10_planner()),
        ("determinism", c11_determinism()),
    ];
    let mut passed = 0;
    for (k, (name, o)) in results.iter().enumerate() {
        println!("{} [{:>2}] {name}: {}", if o.passed { "PASS" } else { "FAIL" }, k + 1, o.detail);
        passed += usize::from(o.passed);
    }
    println!("acceptance: {passed}/{} criteria passed", results.len());
    let strict = std::env::var("OVERACT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < results.len() {
        std::process::exit(1);
    }
}
