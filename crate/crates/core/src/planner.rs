//! Exploration planning: for every actuating mode, close the fixed point
//! between the exploration length and the predicted state bound, then pick
//! the mode with the smallest bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::beta_mode_from_ratio;
use crate::mode::{ActuationMode, SideInfo};
use crate::simulator::NoiseConfig;

/// Tuning constants of the persistence-of-excitation bound, relative to the
/// noise variances: σ₁² = r₁σ̄_ω², σ₂² = r₂σ̄_ν², σ₃² = r₃σ̄_ν².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationTuning {
    pub sigma1_sq_rel: f64,
    pub sigma2_sq_rel: f64,
    pub sigma3_sq_rel: f64,
}

impl Default for ExcitationTuning {
    fn default() -> Self {
        Self {
            sigma1_sq_rel: 0.4,
            sigma2_sq_rel: 7.0,
            sigma3_sq_rel: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSettings {
    pub lambda: f64,
    pub delta: f64,
    /// Horizon T entering 𝒱_T and M_max.
    pub horizon: u64,
    #[serde(default)]
    pub x0_norm: f64,
    /// Largest exploration length tried before a mode is declared open.
    #[serde(default = "default_cap")]
    pub cap: u64,
    #[serde(default)]
    pub excitation: ExcitationTuning,
}

fn default_cap() -> u64 {
    1_000_000
}

/// Every intermediate quantity of the bound for one mode, for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConstants {
    pub mu_c: f64,
    #[serde(rename = "P_cal")]
    pub p_cal: f64,
    #[serde(rename = "G_bar")]
    pub g_bar: f64,
    #[serde(rename = "M_max")]
    pub m_max: f64,
    #[serde(rename = "U_0")]
    pub u_0: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "D1")]
    pub d1: f64,
    #[serde(rename = "D2")]
    pub d2: f64,
    #[serde(rename = "D3")]
    pub d3: f64,
    #[serde(rename = "L_bar")]
    pub l_bar: f64,
    #[serde(rename = "K_bar")]
    pub k_bar: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    #[serde(rename = "V_cal")]
    pub v_cal: f64,
    pub sigma_star_sq: f64,
    pub c_p: f64,
    pub c_p_pp: f64,
    pub alpha_t: f64,
    pub chi_s: f64,
    #[serde(rename = "X_c_sq")]
    pub x_c_sq: f64,
    #[serde(rename = "T_rc")]
    pub t_rc: u64,
    pub c_ci: f64,
}

/// Returns (σ★², c_p, c_p'').
pub fn compute_sigma_star(
    sigma_w_bar: f64,
    sigma_nu_bar: f64,
    sigma1: f64,
    sigma2: f64,
    sigma3: f64,
) -> Result<(f64, f64, f64)> {
    if sigma1 > sigma2 {
        return Err(Error::Config(format!(
            "excitation tuning needs sigma1 <= sigma2, got {sigma1} > {sigma2}"
        )));
    }
    let (w2, nu2) = (sigma_w_bar * sigma_w_bar, sigma_nu_bar * sigma_nu_bar);
    let (s1, s2, s3) = (sigma1 * sigma1, sigma2 * sigma2, sigma3 * sigma3);
    // 4σ̄_ν²(1 + σ²/(2σ̄_ν²))exp(−σ²/σ̄_ν²), which vanishes as σ̄_ν → 0.
    let tail = |s: f64| {
        if nu2 == 0.0 {
            0.0
        } else {
            4.0 * nu2 * (1.0 + s / (2.0 * nu2)) * (-s / nu2).exp()
        }
    };
    let c_p = (w2 - s1 - tail(s2)) / s2;
    let half_tail = if nu2 == 0.0 { 0.0 } else { 0.5 * nu2 * (-s3 / (2.0 * nu2)).exp() };
    let c_pp = (w2 / 2.0 - tail(s3)) / s2 - half_tail;
    if !(c_p > 0.0 && c_pp > 0.0) {
        return Err(Error::InvalidExcitation { c_p, c_pp });
    }
    Ok((c_p.min(c_pp) * s1 / 16.0, c_p, c_pp))
}

/// σ★² for a mode under the given tuning.
pub fn sigma_star_for(noise: &NoiseConfig, sigma_nu: f64, tuning: &ExcitationTuning) -> Result<(f64, f64, f64)> {
    let w2 = noise.sigma_w_bar * noise.sigma_w_bar;
    let nu2 = sigma_nu * sigma_nu;
    compute_sigma_star(
        noise.sigma_w_bar,
        sigma_nu,
        (tuning.sigma1_sq_rel * w2).sqrt(),
        (tuning.sigma2_sq_rel * nu2).sqrt(),
        (tuning.sigma3_sq_rel * nu2).sqrt(),
    )
}

/// 𝒫_c = X²(1+2κᵢ²)T_ω + 4T_ωσ_ν²dᵢ log(dT_ω/δ).
pub fn compute_p_cal(state_bound: f64, kappa_i: f64, t_omega: f64, sigma_nu: f64, d_i: usize, d: usize, delta: f64) -> f64 {
    let explore = if sigma_nu == 0.0 {
        0.0
    } else {
        4.0 * t_omega * sigma_nu * sigma_nu * d_i as f64 * (d as f64 * t_omega / delta).ln()
    };
    state_bound * state_bound * (1.0 + 2.0 * kappa_i * kappa_i) * t_omega + explore
}

/// Estimation-error constant μ_c with ‖Θ̂ − Θ*‖ ≤ μ_c/√T_ω.
#[allow(clippy::too_many_arguments)]
pub fn compute_mu_c(
    mode: &ActuationMode,
    full: &SideInfo,
    state_bound: f64,
    t_omega: f64,
    noise: &NoiseConfig,
    tuning: &ExcitationTuning,
    lambda: f64,
    delta: f64,
    n: usize,
    d: usize,
) -> Result<f64> {
    let sigma_nu = noise.sigma_nu_for(mode.side_info.kappa);
    let (sigma_star_sq, _, _) = sigma_star_for(noise, sigma_nu, tuning)?;
    let p_cal = compute_p_cal(state_bound, mode.side_info.kappa, t_omega, sigma_nu, mode.d_i(), d, delta);
    Ok(mu_c_from(p_cal, sigma_star_sq, noise.sigma_w, lambda, delta, full.s, n, d))
}

#[allow(clippy::too_many_arguments)]
fn mu_c_from(p_cal: f64, sigma_star_sq: f64, sigma_w: f64, lambda: f64, delta: f64, s: f64, n: usize, d: usize) -> f64 {
    let nd = (n + d) as f64;
    let inner = n as f64 * nd * (1.0 + p_cal / (lambda * nd)).ln() + 2.0 * n as f64 * (1.0 / delta).ln();
    (sigma_w * inner.sqrt() + lambda.sqrt() * s) / sigma_star_sq.sqrt()
}

/// ⌈4(1+κ)²μ_c²/(1−Υ)²⌉, saturating at u64::MAX.
pub fn compute_t_c(mu_c: f64, kappa: f64, upsilon: f64) -> u64 {
    let v = (4.0 * (1.0 + kappa).powi(2) * mu_c * mu_c / (1.0 - upsilon).powi(2)).ceil();
    if v.is_finite() && v < u64::MAX as f64 {
        v as u64
    } else {
        u64::MAX
    }
}

/// t-independent part of the state bound for one mode.
#[derive(Debug, Clone)]
pub struct ModeBoundModel {
    pub n: usize,
    pub d: usize,
    pub d_i: usize,
    pub p: usize,
    pub info: SideInfo,
    pub lambda: f64,
    pub delta: f64,
    pub sigma_w: f64,
    pub sigma_nu: f64,
    pub v_cal_horizon: f64,
    pub y_star: f64,
    pub m_max: f64,
    pub u_0: f64,
    pub h: f64,
    pub c_cal: f64,
    pub g_bar: f64,
    /// (1/(1−Υ))(η/Υ)^p, the common amplification factor of D₁–D₃.
    pub amplification: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBound {
    /// x_t = Y^{p+1}.
    pub x: f64,
    pub y: f64,
    pub l_bar: f64,
    pub k_bar: f64,
    pub v_cal: f64,
}

/// 𝒱_t = σ_ν√(2dᵢ log(dᵢt/δ)).
pub fn v_cal(sigma_nu: f64, d_i: usize, t: f64, delta: f64) -> f64 {
    if sigma_nu == 0.0 {
        return 0.0;
    }
    sigma_nu * (2.0 * d_i as f64 * (d_i as f64 * t / delta).ln()).max(0.0).sqrt()
}

impl ModeBoundModel {
    pub fn new(mode: &ActuationMode, noise: &NoiseConfig, settings: &PlannerSettings, n: usize, d: usize) -> Result<Self> {
        let info = mode.side_info;
        let d_i = mode.d_i();
        let p = n + d_i;
        let pf = p as f64;
        let (lambda, delta) = (settings.lambda, settings.delta);
        let sigma_w = noise.sigma_w;
        let sigma_nu = noise.sigma_nu_for(info.kappa);
        let s = info.s;
        let horizon = settings.horizon.max(1) as f64;

        let v_cal_horizon = v_cal(sigma_nu, d_i, horizon, delta);
        let y_star = (1.0 + 2.0 * info.kappa * info.kappa).sqrt() * settings.x0_norm + 2f64.sqrt() * v_cal_horizon;
        if !(y_star > 0.0) {
            return Err(Error::NumericalDomain(
                "regressor bound Y* is zero; exploration noise and initial state both vanish".into(),
            ));
        }
        let log_arg = (1.0 + horizon * y_star / (lambda * pf)) / delta;
        let m_max = ((info.b_bar_bound * sigma_nu + sigma_w) * (n as f64 * pf * log_arg.ln()).sqrt()
            + lambda.sqrt() * s)
            / y_star;

        let e = p as i32 - 2;
        let big = 16f64.powi(e) * 1f64.max(s.powi(2 * e));
        let u_0 = 1.0 / big;
        let h = 2.0 * 16f64.max(4.0 * s * s * m_max * m_max / (pf * u_0));
        let c_cal = 2.0 * (2.0 * s * pf * big.sqrt()).powf(1.0 / (pf + 1.0));
        let g_bar = c_cal * h.powf(1.0 / (2.0 * (pf + 1.0)));

        let amplification = (info.eta / info.upsilon).powi(p as i32) / (1.0 - info.upsilon);
        let exponent = pf / (2.0 * (pf + 1.0));
        let d1 = 4.0 * amplification * g_bar * (1.0 + 2.0 * info.kappa * info.kappa).powf(exponent);
        let d2 = 4.0 * amplification * g_bar * 2f64.powf(exponent) * v_cal_horizon;
        let d3 = n as f64 * 2f64.sqrt() * amplification * sigma_w;

        Ok(Self {
            n,
            d,
            d_i,
            p,
            info,
            lambda,
            delta,
            sigma_w,
            sigma_nu,
            v_cal_horizon,
            y_star,
            m_max,
            u_0,
            h,
            c_cal,
            g_bar,
            amplification,
            d1,
            d2,
            d3,
        })
    }

    /// Predicted state bound after `t ≥ 2` steps of exploration in this mode.
    pub fn state_bound(&self, t: f64) -> Result<StateBound> {
        if !(t >= 2.0) {
            return Err(Error::NumericalDomain(format!("state bound needs t >= 2, got {t}")));
        }
        let (n, pf) = (self.n as f64, self.p as f64);
        let (lambda, delta, sw, s) = (self.lambda, self.delta, self.sigma_w, self.info.s);
        let log_t = t.ln();
        let v_t = v_cal(self.sigma_nu, self.d_i, t, delta);
        let dd = self.d1 + self.d2;
        let kappa_sq = self.info.kappa * self.info.kappa;
        let det_terms = ((pf * lambda + 2.0 * v_t * v_t) / (pf * lambda) * t).ln()
            + ((1.0 + 2.0 * kappa_sq) / (pf * lambda) * t).ln();
        let log_t_delta = (t / delta).ln();
        if log_t_delta < 0.0 {
            return Err(Error::NumericalDomain("log(t/δ) is negative".into()));
        }
        let l_bar = dd * (2.0 * n * sw * (1.0 / delta).ln() + sw * lambda.sqrt() * s) * log_t
            + self.d3 * log_t_delta.sqrt()
            + dd * n * sw * pf * det_terms * log_t;
        let k_bar = 2.0 * dd * n * sw * pf * (pf + 1.0) * log_t;
        // Positive root of K̄y² + L̄y − 1 = 0, written without cancellation.
        let root = if k_bar > 0.0 {
            2.0 / (l_bar + (l_bar * l_bar + 4.0 * k_bar).sqrt())
        } else if l_bar > 0.0 {
            1.0 / l_bar
        } else {
            0.0
        };
        let e = std::f64::consts::E;
        let y = e.max(lambda * pf * (e - 1.0)).max(root);
        Ok(StateBound {
            x: y.powi(self.p as i32 + 1),
            y,
            l_bar,
            k_bar,
            v_cal: v_t,
        })
    }

    /// α_t: the runtime state bound given the largest regressor norm so far
    /// and the current mode radius β.
    pub fn alpha_bound(&self, t: f64, z_max: f64, beta: f64) -> f64 {
        let pf = self.p as f64;
        let n = self.n as f64;
        let t = t.max(1.0);
        let noise_w = self.sigma_w * (2.0 * n * (n * t / self.delta).ln()).max(0.0).sqrt();
        let noise_nu = self.info.s
            * self.sigma_nu
            * (2.0 * self.d_i as f64 * (self.d_i as f64 * t / self.delta).ln()).max(0.0).sqrt();
        self.amplification
            * (self.g_bar * z_max.powf(pf / (pf + 1.0)) * beta.powf(1.0 / (2.0 * (pf + 1.0))) + noise_w + noise_nu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeBounds {
    pub alpha_t: f64,
    pub chi_s: f64,
    pub x_c_sq: f64,
    pub t_rc: u64,
}

/// Diagnostic thresholds for the good events. `full` supplies the κ, Υ of the
/// full-actuation mode used after the handoff.
#[allow(clippy::too_many_arguments)]
pub fn runtime_bounds(
    model: &ModeBoundModel,
    full: &SideInfo,
    t: u64,
    t_c: u64,
    horizon: u64,
    z_max: f64,
    beta: f64,
    c_ci: f64,
) -> RuntimeBounds {
    let n = model.n as f64;
    let pf = model.p as f64;
    let (sw, delta, upsilon, kappa) = (model.sigma_w, model.delta, full.upsilon, full.kappa);
    let remaining = horizon.saturating_sub(t_c).max(1) as f64;
    let log_rem = (n * remaining / delta).ln().max(0.0);
    let chi_s = 2.0 * sw / (1.0 - upsilon) * (2.0 * n * log_rem).sqrt();
    let x_c_sq = 32.0 * n * sw * sw * (1.0 + kappa * kappa) / (1.0 - upsilon).powi(2) * log_rem;
    let extra = (pf * pf.ln() + c_ci.ln() - chi_s.ln()) / (2.0 / (1.0 - upsilon)).ln();
    let extra = if extra.is_finite() && extra > 0.0 { extra.ceil() as u64 } else { 0 };
    RuntimeBounds {
        alpha_t: model.alpha_bound(t as f64, z_max, beta),
        chi_s,
        x_c_sq,
        t_rc: t_c.saturating_add(extra),
    }
}

/// Outcome of the fixed-point search for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEvaluation {
    pub mode_id: usize,
    pub actuators: Vec<usize>,
    pub closed: bool,
    /// Exploration length at which T_c(T_ω) ≤ T_ω first holds.
    pub t_omega: u64,
    #[serde(rename = "T_c")]
    pub t_c: u64,
    pub predicted_state_bound: f64,
    pub amplification: f64,
    pub evaluations: u64,
    pub constants: PlannerConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationPlan {
    pub mode: ActuationMode,
    #[serde(rename = "T_c")]
    pub t_c: u64,
    pub t_omega: u64,
    pub predicted_state_bound: f64,
    pub constants: PlannerConstants,
    pub candidates: Vec<ModeEvaluation>,
}

/// Runs the fixed point t ← max(t+1, ⌈T_c(t)⌉) from t = 2. Because T_c(t) is
/// nondecreasing in t, no skipped t can satisfy t ≥ T_c(t), so this visits
/// the same first closing point as a unit-step scan.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_mode(
    mode: &ActuationMode,
    full: &SideInfo,
    noise: &NoiseConfig,
    settings: &PlannerSettings,
    n: usize,
    d: usize,
) -> Result<ModeEvaluation> {
    let model = ModeBoundModel::new(mode, noise, settings, n, d)?;
    let (sigma_star_sq, c_p, c_pp) = sigma_star_for(noise, model.sigma_nu, &settings.excitation)?;
    let closing = |t: u64| -> Result<(StateBound, f64, f64, u64)> {
        let tf = t as f64;
        let bound = model.state_bound(tf)?;
        let p_cal = compute_p_cal(bound.x, mode.side_info.kappa, tf, model.sigma_nu, model.d_i, d, settings.delta);
        let mu = mu_c_from(p_cal, sigma_star_sq, noise.sigma_w, settings.lambda, settings.delta, full.s, n, d);
        Ok((bound, p_cal, mu, compute_t_c(mu, full.kappa, full.upsilon).max(1)))
    };

    let mut t = 2u64;
    let mut evaluations = 0u64;
    let (closed, bound, p_cal, mu, t_c) = loop {
        evaluations += 1;
        let (bound, p_cal, mu, t_c) = closing(t)?;
        if t >= t_c {
            break (true, bound, p_cal, mu, t_c);
        }
        let next = (t + 1).max(t_c);
        if next > settings.cap {
            break (false, bound, p_cal, mu, t_c);
        }
        t = next;
    };

    let c_ci = bound.x / (model.p as f64).powi(model.p as i32);
    let beta0 = beta_mode_from_ratio(
        0.0,
        settings.lambda,
        settings.delta,
        mode.side_info.s,
        noise.sigma_w,
        model.sigma_nu,
        mode.side_info.b_bar_bound,
        n,
        model.d_i,
    )?;
    let rb = runtime_bounds(&model, full, t, t_c, settings.horizon, model.y_star, beta0, c_ci);
    let constants = PlannerConstants {
        mu_c: mu,
        p_cal,
        g_bar: model.g_bar,
        m_max: model.m_max,
        u_0: model.u_0,
        h: model.h,
        d1: model.d1,
        d2: model.d2,
        d3: model.d3,
        l_bar: bound.l_bar,
        k_bar: bound.k_bar,
        y: bound.y,
        v_cal: bound.v_cal,
        sigma_star_sq,
        c_p,
        c_p_pp: c_pp,
        alpha_t: rb.alpha_t,
        chi_s: rb.chi_s,
        x_c_sq: rb.x_c_sq,
        t_rc: rb.t_rc,
        c_ci,
    };
    Ok(ModeEvaluation {
        mode_id: mode.id,
        actuators: mode.actuators.clone(),
        closed,
        t_omega: t,
        t_c,
        predicted_state_bound: bound.x,
        amplification: model.amplification,
        evaluations,
        constants,
    })
}

/// Side information of the full-actuation mode, required for the
/// post-exploration constants.
pub fn full_side_info(modes: &[ActuationMode], d: usize) -> Result<SideInfo> {
    modes
        .iter()
        .find(|m| m.is_full(d))
        .map(|m| m.side_info)
        .ok_or_else(|| Error::Config("the mode list must include the full-actuation mode".into()))
}

/// Selects the exploration mode. Ties in the predicted bound (relative 1e-12)
/// go to the smaller amplification factor, then the shorter T_c, then the
/// lower id.
pub fn plan_exploration(
    modes: &[ActuationMode],
    noise: &NoiseConfig,
    settings: &PlannerSettings,
    n: usize,
    d: usize,
) -> Result<ExplorationPlan> {
    if modes.is_empty() {
        return Err(Error::Config("no candidate modes".into()));
    }
    if !(settings.delta > 0.0 && settings.delta < 1.0) || !(settings.lambda > 0.0) {
        return Err(Error::Config("planner needs lambda > 0 and delta in (0,1)".into()));
    }
    for m in modes {
        m.check_range(d)?;
        m.side_info.validate()?;
    }
    let full = full_side_info(modes, d)?;
    let evaluations: Vec<ModeEvaluation> = modes
        .par_iter()
        .map(|m| evaluate_mode(m, &full, noise, settings, n, d))
        .collect::<Result<_>>()?;

    let better = |a: &ModeEvaluation, b: &ModeEvaluation| -> bool {
        let scale = a.predicted_state_bound.abs().max(b.predicted_state_bound.abs());
        let diff = a.predicted_state_bound - b.predicted_state_bound;
        if diff.abs() > 1e-12 * scale {
            return diff < 0.0;
        }
        if a.amplification != b.amplification {
            return a.amplification < b.amplification;
        }
        if a.t_c != b.t_c {
            return a.t_c < b.t_c;
        }
        a.mode_id < b.mode_id
    };
    let mut winner: Option<&ModeEvaluation> = None;
    for e in evaluations.iter().filter(|e| e.closed) {
        if winner.is_none_or(|w| better(e, w)) {
            winner = Some(e);
        }
    }
    let winner = winner.ok_or(Error::NoFeasibleMode { cap: settings.cap })?;
    let mode = modes
        .iter()
        .find(|m| m.id == winner.mode_id)
        .cloned()
        .expect("winner comes from the candidate list");
    Ok(ExplorationPlan {
        mode,
        t_c: winner.t_c,
        t_omega: winner.t_omega,
        predicted_state_bound: winner.predicted_state_bound,
        constants: winner.constants.clone(),
        candidates: evaluations.clone(),
    })
}
