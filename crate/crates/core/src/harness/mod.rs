//! Experiment orchestration behind the command-line tool.

pub mod calibrate;
pub mod config;
pub mod experiment;
pub mod benchmark;
pub mod selfcheck;
pub mod summary;

use crate::control::DareOptions;
use crate::error::{Error, Result};
use crate::mode::{enumerate_subsets, ActuationMode};
use crate::planner::{plan_exploration, ExplorationPlan, PlannerSettings};
use crate::simulator::{optimal_avg_cost, NoiseConfig, NoiseDistribution, PlantTruth};
use calibrate::{calibrate_mode, ModeCalibration};
use config::{ExperimentConfig, ModesSpec, SideInfoSpec};

/// A configuration with its plant, noise and candidate modes materialized.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub plant: PlantTruth,
    /// Noise parameters; the seed is set per trial.
    pub noise: NoiseConfig,
    pub modes: Vec<ActuationMode>,
    /// Empty unless side information was calibrated.
    pub calibration: Vec<ModeCalibration>,
    pub planner: PlannerSettings,
}

impl ResolvedExperiment {
    pub fn full_mode(&self) -> &ActuationMode {
        let d = self.plant.d();
        self.modes.iter().find(|m| m.is_full(d)).expect("resolve guarantees a full mode")
    }

    pub fn plan(&self) -> Result<ExplorationPlan> {
        plan_exploration(&self.modes, &self.noise, &self.planner, self.plant.n(), self.plant.d())
    }
}

fn label(actuators: &[usize]) -> String {
    let inner: Vec<String> = actuators.iter().map(|a| a.to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

pub fn resolve(config: &ExperimentConfig) -> Result<ResolvedExperiment> {
    config.validate()?;
    let plant = config.plant.to_truth()?;
    let d = plant.d();
    let noise = NoiseConfig {
        sigma_w: config.noise.sigma_w,
        sigma_w_bar: config.noise.sigma_w_bar.unwrap_or(config.noise.sigma_w),
        sigma_nu: config.noise.sigma_nu,
        distribution: NoiseDistribution::Gaussian,
        seed: 0,
    };
    noise.validate()?;

    let mut subsets = match &config.modes {
        ModesSpec::Keyword(_) => enumerate_subsets(d),
        ModesSpec::Explicit(list) => list.clone(),
    };
    for s in subsets.iter_mut() {
        s.sort_unstable();
        s.dedup();
        if s.is_empty() || s.iter().any(|&a| a == 0 || a > d) {
            return Err(Error::Config(format!("mode {s:?} is not a nonempty subset of 1..={d}")));
        }
    }
    if !subsets.iter().any(|s| s.len() == d) {
        return Err(Error::Config("the mode list must include the full-actuation mode".into()));
    }

    let mut modes = Vec::new();
    let mut calibration = Vec::new();
    match &config.side_info {
        SideInfoSpec::Table(table) => {
            for (k, actuators) in subsets.iter().enumerate() {
                let key = label(actuators);
                let info = table
                    .get(&key)
                    .ok_or_else(|| Error::Config(format!("side_info.table has no entry for mode {key}")))?;
                info.validate()
                    .map_err(|e| Error::Config(format!("side_info.table.{key}: {e}")))?;
                modes.push(ActuationMode::new(k + 1, actuators.clone(), *info)?);
            }
        }
        SideInfoSpec::Calibrate(settings) => {
            let opts = DareOptions::default();
            let noise_var = noise.sigma_w_bar.powi(2);
            let j_star = optimal_avg_cost(&plant, noise.sigma_w_bar, &opts)?;
            for (k, actuators) in subsets.iter().enumerate() {
                let cal = calibrate_mode(&plant, actuators, settings, j_star, noise_var, &opts)?;
                match cal.side_info {
                    Some(info) => modes.push(ActuationMode::new(k + 1, actuators.clone(), info)?),
                    None if actuators.len() == d => {
                        return Err(Error::Config(format!(
                            "full actuation fails calibration: {}",
                            cal.note.as_deref().unwrap_or("unknown reason")
                        )))
                    }
                    None => {}
                }
                calibration.push(cal);
            }
        }
    }
    let planner = PlannerSettings {
        lambda: config.lambda,
        delta: config.delta,
        horizon: config.horizon as u64,
        x0_norm: config.planner.x0_norm,
        cap: config.planner.cap,
        excitation: config.planner.excitation,
    };
    Ok(ResolvedExperiment {
        config: config.clone(),
        plant,
        noise,
        modes,
        calibration,
        planner,
    })
}
