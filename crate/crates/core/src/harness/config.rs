//! Experiment configuration files: one JSON document, matrices as row-major
//! nested arrays.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::calibrate::CalibrationSettings;
use crate::controller::OfuSettings;
use crate::error::{Error, Result};
use crate::linalg::{from_rows, to_rows};
use crate::mode::SideInfo;
use crate::planner::ExcitationTuning;
use crate::simulator::PlantTruth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

impl PlantSpec {
    pub fn from_truth(plant: &PlantTruth) -> Self {
        Self {
            a: to_rows(&plant.a),
            b: to_rows(&plant.b),
            q: to_rows(&plant.q),
            r: to_rows(&plant.r),
        }
    }

    pub fn to_truth(&self) -> Result<PlantTruth> {
        PlantTruth::new(from_rows(&self.a)?, from_rows(&self.b)?, from_rows(&self.q)?, from_rows(&self.r)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma_w: f64,
    /// Defaults to `sigma_w`.
    #[serde(default)]
    pub sigma_w_bar: Option<f64>,
    /// Defaults to √2·κ·σ̄_ω per mode.
    #[serde(default)]
    pub sigma_nu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModesKeyword {
    #[serde(rename = "all_nonempty_subsets")]
    AllNonemptySubsets,
}

/// Candidate modes: the keyword, or explicit 1-based actuator lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModesSpec {
    Keyword(ModesKeyword),
    Explicit(Vec<Vec<usize>>),
}

/// Side information either given per mode (keyed by labels such as `{1,2}`)
/// or calibrated from the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideInfoSpec {
    Table(BTreeMap<String, SideInfo>),
    Calibrate(CalibrationSettings),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Explore in the planner's mode.
    Switching,
    /// Explore with every actuator.
    FullActuation,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Switching => "switching",
            Baseline::FullActuation => "full_actuation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerTuning {
    #[serde(default = "default_cap")]
    pub cap: u64,
    #[serde(default)]
    pub x0_norm: f64,
    #[serde(default)]
    pub excitation: ExcitationTuning,
}

impl Default for PlannerTuning {
    fn default() -> Self {
        Self {
            cap: default_cap(),
            x0_norm: 0.0,
            excitation: ExcitationTuning::default(),
        }
    }
}

fn default_cap() -> u64 {
    1_000_000
}

fn default_trials() -> usize {
    1
}

fn default_baselines() -> Vec<Baseline> {
    vec![Baseline::Switching, Baseline::FullActuation]
}

fn default_state_cap() -> f64 {
    1e9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSpec,
    pub noise: NoiseSpec,
    pub lambda: f64,
    pub delta: f64,
    pub horizon: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub modes: ModesSpec,
    pub side_info: SideInfoSpec,
    #[serde(default)]
    pub ofu: OfuSettings,
    #[serde(default)]
    pub planner: PlannerTuning,
    /// Replaces the planner's exploration length when set.
    #[serde(default)]
    pub exploration_steps: Option<usize>,
    #[serde(default = "default_baselines")]
    pub baselines: Vec<Baseline>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_state_cap")]
    pub state_cap: f64,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("field `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::Config(format!("horizon must be at least 2, got {}", self.horizon)));
        }
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.noise.sigma_w > 0.0) {
            return Err(Error::Config("noise.sigma_w must be positive".into()));
        }
        if let Some(steps) = self.exploration_steps {
            if steps >= self.horizon {
                return Err(Error::Config(format!(
                    "exploration_steps {steps} must be below the horizon {}",
                    self.horizon
                )));
            }
        }
        if self.baselines.is_empty() {
            return Err(Error::Config("at least one baseline is required".into()));
        }
        Ok(())
    }
}
