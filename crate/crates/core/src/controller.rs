//! The two control loops and the episode driver: optimistic control in the
//! exploration mode with extra input noise up to T_c, then optimistic control
//! in full actuation on the central estimator.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::control::{DareOptions, RiccatiSolution, SystemParam};
use crate::error::{Error, Result};
use crate::estimation::{scatter_input, stack, ConfidenceEllipsoid, RadiusRule, RegressorSample};
use crate::linalg::{min_eigenvalue_sym, spectral_norm, Mat, Vector};
use crate::mode::ActuationMode;
use crate::ofu::{ofu_select, OfuConfig, StepRule};
use crate::planner::{runtime_bounds, ModeBoundModel, PlannerSettings};
use crate::simulator::{
    draw_noises, optimal_avg_cost, step_plant, NoiseConfig, Phase, PlantTruth, RegretLedger, StepInput,
};

/// Policy update rule: a new optimistic parameter is computed at the first
/// step of a phase and whenever det V has more than doubled since the last
/// update. Works on log determinants.
pub fn should_update(log_det_v: f64, tau_log_det: f64, t: usize, phase_start: usize) -> bool {
    t == phase_start || log_det_v > tau_log_det + LN_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfuSettings {
    pub iters: usize,
    pub step_rule: StepRule,
    pub projection_tol: f64,
    /// Random feasible restarts when the very first optimistic search fails.
    pub start_restarts: usize,
    /// Skip iterates whose closed loop exceeds the mode's Υ.
    pub enforce_admissibility: bool,
    #[serde(skip)]
    pub dare: DareOptions,
}

impl Default for OfuSettings {
    fn default() -> Self {
        Self {
            iters: 100,
            step_rule: StepRule::TraceScaled,
            projection_tol: 1e-10,
            start_restarts: 10,
            enforce_admissibility: true,
            dare: DareOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    pub plant: PlantTruth,
    pub noise: NoiseConfig,
    pub lambda: f64,
    pub delta: f64,
    pub horizon: usize,
    /// Last exploration step T_c; exploration covers t = 0..=T_c.
    pub exploration_steps: usize,
    pub explore_mode: ActuationMode,
    pub full_mode: ActuationMode,
    pub ofu: OfuSettings,
    pub state_cap: f64,
    /// Settings used to evaluate the diagnostic state bounds.
    pub planner: PlannerSettings,
    pub c_ci: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchReason {
    PhaseStart,
    DetDoubled,
    /// Update was due but the optimistic search failed; previous policy kept.
    SearchFailed,
}

#[derive(Debug, Clone)]
pub struct ControllerState {
    pub phase: Phase,
    pub mode_est: ConfidenceEllipsoid,
    pub central_est: ConfidenceEllipsoid,
    pub theta_tilde: Option<SystemParam>,
    pub gain: Option<RiccatiSolution>,
    pub tau_log_det: f64,
    pub switch_log: Vec<(usize, SwitchReason)>,
}

/// What one control step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Controller input scattered to full dimension.
    pub u_control: Vector,
    /// Exploration noise actually applied (zero after exploration).
    pub nu: Vector,
    pub switched: bool,
}

pub struct Controller {
    cfg: EpisodeConfig,
    state: ControllerState,
    sigma_nu: f64,
    r_mode: Mat,
}

impl Controller {
    pub fn new(cfg: EpisodeConfig) -> Result<Self> {
        let n = cfg.plant.n();
        let d = cfg.plant.d();
        cfg.explore_mode.check_range(d)?;
        if !cfg.full_mode.is_full(d) {
            return Err(Error::Config("full_mode must contain every actuator".into()));
        }
        let mi = cfg.explore_mode.side_info;
        let sigma_nu = cfg.noise.sigma_nu_for(mi.kappa);
        let b_bar_norm = if cfg.explore_mode.is_full(d) { 0.0 } else { mi.b_bar_bound };
        let mode_rule = RadiusRule::Mode {
            s: mi.s,
            sigma_w: cfg.noise.sigma_w,
            sigma_nu,
            b_bar_norm,
        };
        let central_rule = RadiusRule::Central {
            s: cfg.full_mode.side_info.s,
            sigma_w: cfg.noise.sigma_w,
        };
        let mode_est = ConfidenceEllipsoid::new(n, n + cfg.explore_mode.d_i(), cfg.lambda, cfg.delta, mode_rule)?;
        let central_est = ConfidenceEllipsoid::new(n, n + d, cfg.lambda, cfg.delta, central_rule)?;
        let r_mode = cfg.explore_mode.select_r(&cfg.plant.r)?;
        Ok(Self {
            state: ControllerState {
                phase: Phase::Explore,
                tau_log_det: mode_est.log_det_v(),
                mode_est,
                central_est,
                theta_tilde: None,
                gain: None,
                switch_log: Vec::new(),
            },
            cfg,
            sigma_nu,
            r_mode,
        })
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn sigma_nu(&self) -> f64 {
        self.sigma_nu
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    fn phase_at(&self, t: usize) -> Phase {
        if t <= self.cfg.exploration_steps {
            Phase::Explore
        } else {
            Phase::Optimize
        }
    }

    fn ofu_config(&self, phase: Phase, t: usize) -> OfuConfig {
        let (info, scale_l) = match phase {
            Phase::Explore => {
                let mi = self.cfg.explore_mode.side_info;
                let w2 = self.cfg.noise.sigma_w_bar.powi(2);
                (mi, w2 + mi.theta_bound.powi(2) * self.sigma_nu.powi(2))
            }
            Phase::Optimize => (self.cfg.full_mode.side_info, self.cfg.noise.sigma_w_bar.powi(2)),
        };
        OfuConfig {
            iters: self.cfg.ofu.iters,
            step_rule: self.cfg.ofu.step_rule,
            scale_l,
            trace_bound: info.s * info.s,
            admissible_norm: if self.cfg.ofu.enforce_admissibility { info.upsilon } else { f64::INFINITY },
            seed: self.cfg.noise.seed ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            restarts: 0,
            projection_tol: self.cfg.ofu.projection_tol,
            dare: self.cfg.ofu.dare,
        }
    }

    /// Recomputes the optimistic parameter for the active estimator. When
    /// the warm-started search and its restarts all fail, the previous policy
    /// is kept.
    fn update_policy(&mut self, phase: Phase, t: usize) -> Result<bool> {
        let mut ofu = self.ofu_config(phase, t);
        let (est, r) = match phase {
            Phase::Explore => (&self.state.mode_est, &self.r_mode),
            Phase::Optimize => (&self.state.central_est, &self.cfg.plant.r),
        };
        let warm = match &self.state.theta_tilde {
            Some(th) if th.theta().shape() == est.theta_hat().shape() => th.clone(),
            _ => est.center(),
        };
        // Restarts run only when the warm-started search finds no admissible
        // point; keeping a stale gain instead can leave the loop unstable.
        ofu.restarts = self.cfg.ofu.start_restarts;
        match ofu_select(est, &self.cfg.plant.q, r, &ofu, &warm) {
            Ok(out) => {
                self.state.theta_tilde = Some(out.param);
                self.state.gain = Some(out.solution);
                Ok(true)
            }
            Err(Error::NoAdmissiblePoint) if self.state.gain.is_some() => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Chooses the input at time t for state x. `nu` is the exploration draw
    /// for this step; it is applied only during exploration.
    pub fn act(&mut self, t: usize, x: &Vector, nu: &Vector) -> Result<StepOutput> {
        let phase = self.phase_at(t);
        let d = self.cfg.plant.d();
        let handoff = phase == Phase::Optimize && self.state.phase == Phase::Explore;
        if handoff {
            // The central estimator carries over untouched; only the switch
            // reference moves to it.
            self.state.phase = Phase::Optimize;
            self.state.theta_tilde = None;
            // The previous policy, lifted to full input dimension, stays the
            // fallback if the first full-actuation search fails.
            if let Some(sol) = self.state.gain.as_mut() {
                let mut k = Mat::zeros(d, self.cfg.plant.n());
                for (row, &c) in self.cfg.explore_mode.columns().iter().enumerate() {
                    k.set_row(c, &sol.k.row(row));
                }
                sol.k = k;
            }
        }
        let (log_det, phase_start) = match phase {
            Phase::Explore => (self.state.mode_est.log_det_v(), 0),
            Phase::Optimize => (self.state.central_est.log_det_v(), self.cfg.exploration_steps + 1),
        };
        let mut switched = false;
        if should_update(log_det, self.state.tau_log_det, t, phase_start) {
            let updated = self.update_policy(phase, t)?;
            self.state.tau_log_det = log_det;
            let reason = if !updated {
                SwitchReason::SearchFailed
            } else if t == phase_start {
                SwitchReason::PhaseStart
            } else {
                SwitchReason::DetDoubled
            };
            self.state.switch_log.push((t, reason));
            switched = updated;
        }
        let gain = self.state.gain.as_ref().expect("policy exists after the first update");
        let u = &gain.k * x;
        match phase {
            Phase::Explore => {
                let u_control = scatter_input(&u, &Vector::zeros(d), &self.cfg.explore_mode)?;
                Ok(StepOutput {
                    u_control,
                    nu: nu.clone(),
                    switched,
                })
            }
            Phase::Optimize => Ok(StepOutput {
                u_control: u,
                nu: Vector::zeros(d),
                switched,
            }),
        }
    }

    /// Feeds the observed transition to the estimators.
    pub fn absorb(&mut self, t: usize, x: &Vector, out: &StepOutput, x_next: &Vector) -> Result<()> {
        let u_bar = &out.u_control + &out.nu;
        if self.phase_at(t) == Phase::Explore {
            let cols = self.cfg.explore_mode.columns();
            let u_mode = Vector::from_iterator(cols.len(), cols.iter().map(|&c| u_bar[c]));
            self.state
                .mode_est
                .rls_update(&RegressorSample::new(stack(x, &u_mode), x_next.clone()))?;
        }
        self.state
            .central_est
            .rls_update(&RegressorSample::new(stack(x, &u_bar), x_next.clone()))
    }
}

/// Truth restricted to the exploration mode, Θ*ⁱ = (A*, B*ⁱ)ᵀ.
pub fn mode_truth(plant: &PlantTruth, mode: &ActuationMode) -> Result<SystemParam> {
    SystemParam::from_ab(&plant.a, &mode.select_b(&plant.b)?)
}

/// Runs one episode and returns the ledger together with the error that
/// stopped it early, if any. The ledger holds every step completed before
/// the failure.
pub fn run_episode_logged(cfg: &EpisodeConfig) -> (RegretLedger, Option<Error>) {
    let mut ledger = RegretLedger::new(&cfg.plant, f64::NAN);
    let result = drive(cfg, &mut ledger);
    (ledger, result.err())
}

/// Runs one episode; any failure (including divergence past the state cap)
/// is returned as an error.
pub fn run_episode(cfg: &EpisodeConfig) -> Result<RegretLedger> {
    let (ledger, err) = run_episode_logged(cfg);
    match err {
        Some(e) => Err(e),
        None => Ok(ledger),
    }
}

fn drive(cfg: &EpisodeConfig, ledger: &mut RegretLedger) -> Result<()> {
    if cfg.horizon <= cfg.exploration_steps {
        return Err(Error::Config(format!(
            "horizon {} must exceed the exploration length {}",
            cfg.horizon, cfg.exploration_steps
        )));
    }
    let n = cfg.plant.n();
    let d = cfg.plant.d();
    let j_star = optimal_avg_cost(&cfg.plant, cfg.noise.sigma_w_bar, &cfg.ofu.dare)?;
    *ledger = RegretLedger::new(&cfg.plant, j_star);
    let truth = cfg.plant.theta();
    let truth_mode = mode_truth(&cfg.plant, &cfg.explore_mode)?;
    let bound_model = ModeBoundModel::new(&cfg.explore_mode, &cfg.noise, &cfg.planner, n, d).ok();

    let mut ctrl = Controller::new(cfg.clone())?;
    let sigma_nu = ctrl.sigma_nu();
    let mut x = Vector::zeros(n);
    let mut z_max: f64 = 0.0;
    for t in 0..=cfg.horizon {
        let (w, nu) = draw_noises(&cfg.noise, sigma_nu, t as u64, n, d);
        let out = ctrl.act(t, &x, &nu)?;
        let phase = ctrl.phase_at(t);

        let st = ctrl.state();
        let central = &st.central_est;
        let (log_det_v, beta) = match phase {
            Phase::Explore => (st.mode_est.log_det_v(), st.mode_est.beta()),
            Phase::Optimize => (central.log_det_v(), central.beta()),
        };
        let (alpha_bound, x_c_sq) = match &bound_model {
            Some(model) => {
                let rb = runtime_bounds(
                    model,
                    &cfg.full_mode.side_info,
                    t.max(1) as u64,
                    cfg.exploration_steps as u64,
                    cfg.horizon as u64,
                    z_max,
                    st.mode_est.beta(),
                    cfg.c_ci,
                );
                (rb.alpha_t, rb.x_c_sq)
            }
            None => (f64::INFINITY, f64::INFINITY),
        };
        let conf_ratio_mode = if phase == Phase::Explore {
            st.mode_est.conf_ratio(truth_mode.theta())?
        } else {
            f64::NAN
        };
        ledger.update(StepInput {
            t,
            mode_id: if phase == Phase::Explore { cfg.explore_mode.id } else { cfg.full_mode.id },
            phase,
            x: x.clone(),
            u_control: out.u_control.clone(),
            nu: out.nu.clone(),
            switched: out.switched,
            log_det_v,
            lambda_min_v: min_eigenvalue_sym(central.v()),
            est_error: spectral_norm(&(central.theta_hat() - truth.theta())),
            beta,
            conf_ratio: central.conf_ratio(truth.theta())?,
            conf_ratio_mode,
            central_log_det_v: central.log_det_v(),
            alpha_bound,
            x_c_sq,
        })?;

        let u_bar = &out.u_control + &out.nu;
        let x_next = step_plant(&cfg.plant, &x, &u_bar, &w)?;
        if phase == Phase::Explore {
            let cols = cfg.explore_mode.columns();
            let z_norm_sq = x.norm_squared() + cols.iter().map(|&c| u_bar[c] * u_bar[c]).sum::<f64>();
            z_max = z_max.max(z_norm_sq.sqrt());
        }
        ctrl.absorb(t, &x, &out, &x_next)?;
        let norm = x_next.norm();
        if !(norm <= cfg.state_cap) {
            return Err(Error::SimulationDiverged { t: t + 1, norm });
        }
        x = x_next;
    }
    Ok(())
}
