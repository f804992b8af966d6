//! Built-in configuration of the three-state, three-actuator benchmark.

use super::calibrate::CalibrationSettings;
use super::config::{
    Baseline, ExperimentConfig, ModesKeyword, ModesSpec, NoiseSpec, PlannerTuning, PlantSpec, SideInfoSpec,
};
use crate::controller::OfuSettings;
use crate::error::Result;
use crate::linalg::from_rows;
use crate::simulator::PlantTruth;

pub const HORIZON: usize = 10_000;
/// Exploration length reported for the benchmark and used for the episodes.
pub const EXPLORATION_STEPS: usize = 50;
pub const TRIALS: usize = 10;

pub fn plant_spec() -> PlantSpec {
    PlantSpec {
        a: vec![vec![1.04, 0.0, -0.27], vec![0.52, -0.81, 0.83], vec![0.0, 0.04, -0.90]],
        b: vec![vec![0.61, -0.29, -0.47], vec![0.58, 0.25, -0.5], vec![0.0, -0.72, 0.29]],
        q: vec![vec![0.65, -0.08, -0.14], vec![-0.08, 0.57, 0.26], vec![-0.14, 0.26, 2.5]],
        r: vec![vec![0.14, 0.04, 0.05], vec![0.04, 0.24, 0.08], vec![0.05, 0.08, 0.2]],
    }
}

pub fn plant() -> Result<PlantTruth> {
    let s = plant_spec();
    PlantTruth::new(from_rows(&s.a)?, from_rows(&s.b)?, from_rows(&s.q)?, from_rows(&s.r)?)
}

/// The benchmark with calibrated side information. The planner's own
/// exploration length is reported in the outputs; the episodes explore for
/// [`EXPLORATION_STEPS`].
pub fn config() -> ExperimentConfig {
    ExperimentConfig {
        plant: plant_spec(),
        noise: NoiseSpec {
            sigma_w: 0.1,
            sigma_w_bar: None,
            sigma_nu: None,
        },
        lambda: 1.0,
        delta: 1.0 / HORIZON as f64,
        horizon: HORIZON,
        trials: TRIALS,
        modes: ModesSpec::Keyword(ModesKeyword::AllNonemptySubsets),
        side_info: SideInfoSpec::Calibrate(CalibrationSettings::default()),
        ofu: OfuSettings::default(),
        planner: PlannerTuning {
            cap: 1_000_000_000_000_000,
            ..PlannerTuning::default()
        },
        exploration_steps: Some(EXPLORATION_STEPS),
        baselines: vec![Baseline::Switching, Baseline::FullActuation],
        output_dir: None,
        master_seed: 0,
        state_cap: 1e9,
    }
}
