//! Ground-truth plant, reproducible noise streams and regret bookkeeping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::control::{check_controllable, solve_dare, DareOptions, SystemParam};
use crate::error::{dim_check, Error, Result};
use crate::linalg::{min_eigenvalue_sym, Mat, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantTruth {
    pub a: Mat,
    pub b: Mat,
    pub q: Mat,
    pub r: Mat,
}

impl PlantTruth {
    pub fn new(a: Mat, b: Mat, q: Mat, r: Mat) -> Result<Self> {
        let n = a.nrows();
        let d = b.ncols();
        dim_check("plant A", (n, n), a.shape())?;
        dim_check("plant B", (n, d), b.shape())?;
        dim_check("plant Q", (n, n), q.shape())?;
        dim_check("plant R", (d, d), r.shape())?;
        Ok(Self { a, b, q, r })
    }

    /// Checks controllability of (A, B) and positive definiteness of Q, R.
    pub fn validate(&self) -> Result<()> {
        for (m, name) in [(&self.q, "Q"), (&self.r, "R")] {
            if (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) || min_eigenvalue_sym(m) <= 0.0 {
                return Err(Error::Config(format!("{name} must be symmetric positive definite")));
            }
        }
        if !check_controllable(&self.theta(), 1e-10) {
            return Err(Error::Config("(A, B) is not controllable".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.b.ncols()
    }

    pub fn theta(&self) -> SystemParam {
        SystemParam::from_ab(&self.a, &self.b).expect("plant shapes were checked")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Sub-Gaussian parameter σ_ω.
    pub sigma_w: f64,
    /// Process noise standard deviation σ̄_ω.
    pub sigma_w_bar: f64,
    /// Exploration noise standard deviation; `None` means √2·κ·σ̄_ω.
    #[serde(default)]
    pub sigma_nu: Option<f64>,
    #[serde(default)]
    pub distribution: NoiseDistribution,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseConfig {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            sigma_w: sigma,
            sigma_w_bar: sigma,
            sigma_nu: None,
            distribution: NoiseDistribution::Gaussian,
            seed,
        }
    }

    /// σ_ν for a mode with gain bound κ: σ_ν² = 2κ²σ̄_ω² unless overridden.
    pub fn sigma_nu_for(&self, kappa: f64) -> f64 {
        self.sigma_nu.unwrap_or(2f64.sqrt() * kappa * self.sigma_w_bar)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_w_bar >= 0.0 && self.sigma_w >= self.sigma_w_bar) {
            return Err(Error::Config("noise needs sigma_w >= sigma_w_bar >= 0".into()));
        }
        if self.sigma_nu.is_some_and(|s| !(s >= 0.0)) {
            return Err(Error::Config("sigma_nu must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Noise for step `t`: w ~ N(0, σ̄_ω²I_n) then ν ~ N(0, σ_ν²I_d), drawn from a
/// ChaCha stream selected by t so any step can be regenerated on its own.
pub fn draw_noises(cfg: &NoiseConfig, sigma_nu: f64, t: u64, n: usize, d: usize) -> (Vector, Vector) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(t);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let w = Vector::from_fn(n, |_, _| normal() * cfg.sigma_w_bar);
    let nu = Vector::from_fn(d, |_, _| normal() * sigma_nu);
    (w, nu)
}

pub fn step_plant(plant: &PlantTruth, x: &Vector, u_full: &Vector, w: &Vector) -> Result<Vector> {
    dim_check("step_plant state", (plant.n(), 1), (x.len(), 1))?;
    dim_check("step_plant input", (plant.d(), 1), (u_full.len(), 1))?;
    dim_check("step_plant noise", (plant.n(), 1), (w.len(), 1))?;
    Ok(&plant.a * x + &plant.b * u_full + w)
}

pub fn stage_cost(plant: &PlantTruth, x: &Vector, u_full: &Vector) -> f64 {
    x.dot(&(&plant.q * x)) + u_full.dot(&(&plant.r * u_full))
}

/// J* = σ̄_ω²·trace(P(Θ*, Q, R)).
pub fn optimal_avg_cost(plant: &PlantTruth, sigma_w_bar: f64, opts: &DareOptions) -> Result<f64> {
    let sol = solve_dare(&plant.theta(), &plant.q, &plant.r, sigma_w_bar * sigma_w_bar, opts)?;
    Ok(sol.j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Explore,
    Optimize,
}

/// What the controller reports after each step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInput {
    pub t: usize,
    pub mode_id: usize,
    pub phase: Phase,
    pub x: Vector,
    /// Controller input scattered to full dimension (zero on idle actuators).
    pub u_control: Vector,
    /// Exploration noise, zero outside exploration.
    pub nu: Vector,
    pub switched: bool,
    pub log_det_v: f64,
    pub lambda_min_v: f64,
    pub est_error: f64,
    pub beta: f64,
    /// tr((Θ̂−Θ*)ᵀV(Θ̂−Θ*))/β for the central estimator.
    pub conf_ratio: f64,
    /// Same ratio for the mode estimator against the truth restricted to the mode.
    pub conf_ratio_mode: f64,
    /// log det of the central Gram matrix.
    pub central_log_det_v: f64,
    pub alpha_bound: f64,
    pub x_c_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub mode_id: usize,
    pub phase: Phase,
    pub x: Vec<f64>,
    pub u_applied: Vec<f64>,
    pub nu: Vec<f64>,
    pub state_norm: f64,
    pub cost: f64,
    pub cum_regret: f64,
    pub log_det_v: f64,
    pub lambda_min_v: f64,
    pub est_error: f64,
    pub beta: f64,
    pub switched: bool,
    pub alpha_bound: f64,
    pub within_good_event: bool,
    pub conf_ratio: f64,
    pub conf_ratio_mode: f64,
    pub central_log_det_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    pub records: Vec<StepRecord>,
    pub j_star: f64,
    pub r0_empirical: f64,
    pub switch_count: usize,
    pub good_event_violations: usize,
    #[serde(skip)]
    q: Mat,
    #[serde(skip)]
    r: Mat,
    cost_sum: f64,
}

impl RegretLedger {
    pub fn new(plant: &PlantTruth, j_star: f64) -> Self {
        Self {
            records: Vec::new(),
            j_star,
            r0_empirical: 0.0,
            switch_count: 0,
            good_event_violations: 0,
            q: plant.q.clone(),
            r: plant.r.clone(),
            cost_sum: 0.0,
        }
    }

    /// Appends one step. Regret accumulates from t = 1; the exploration-noise
    /// term R₀ accumulates over every exploration step including t = 0.
    pub fn update(&mut self, step: StepInput) -> Result<()> {
        if let Some(last) = self.records.last() {
            if step.t <= last.t {
                return Err(Error::OutOfOrder { prev: last.t, t: step.t });
            }
        }
        let d = self.r.nrows();
        dim_check("ledger input", (d, 1), (step.u_control.len(), 1))?;
        dim_check("ledger noise", (d, 1), (step.nu.len(), 1))?;
        let u_applied = &step.u_control + &step.nu;
        let cost = step.x.dot(&(&self.q * &step.x)) + u_applied.dot(&(&self.r * &u_applied));
        if step.t >= 1 {
            self.cost_sum += cost;
        }
        let cum_regret = if step.t >= 1 {
            self.records.last().map_or(0.0, |r| r.cum_regret) + (cost - self.j_star)
        } else {
            0.0
        };
        if step.phase == Phase::Explore {
            let r_nu = &self.r * &step.nu;
            self.r0_empirical += 2.0 * r_nu.dot(&step.u_control) + step.nu.dot(&r_nu);
        }
        let state_norm = step.x.norm();
        let within_good_event = match step.phase {
            Phase::Explore => state_norm <= step.alpha_bound,
            Phase::Optimize => state_norm * state_norm <= step.x_c_sq,
        };
        if !within_good_event {
            self.good_event_violations += 1;
        }
        if step.switched {
            self.switch_count += 1;
        }
        self.records.push(StepRecord {
            t: step.t,
            mode_id: step.mode_id,
            phase: step.phase,
            x: step.x.as_slice().to_vec(),
            u_applied: u_applied.as_slice().to_vec(),
            nu: step.nu.as_slice().to_vec(),
            state_norm,
            cost,
            cum_regret,
            log_det_v: step.log_det_v,
            lambda_min_v: step.lambda_min_v,
            est_error: step.est_error,
            beta: step.beta,
            switched: step.switched,
            alpha_bound: step.alpha_bound,
            within_good_event,
            conf_ratio: step.conf_ratio,
            conf_ratio_mode: step.conf_ratio_mode,
            central_log_det_v: step.central_log_det_v,
        });
        Ok(())
    }

    /// Σ_{t≥1} cost_t.
    pub fn cost_sum(&self) -> f64 {
        self.cost_sum
    }

    pub fn final_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_regret)
    }
}
