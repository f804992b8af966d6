//! Optimistic parameter selection: projected gradient descent on L·trace(P(Θ))
//! over the confidence ellipsoid intersected with the trace ball.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::control::{grad_from_solution, solve_dare, DareOptions, RiccatiSolution, SystemParam};
use crate::error::{Error, Result};
use crate::estimation::{ConfidenceEllipsoid, EllipsoidProjector};
use crate::linalg::{spectral_norm, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// γ = √(0.001 / trace V).
    TraceScaled,
    Fixed(f64),
}

pub fn step_size(v: &Mat, rule: StepRule) -> f64 {
    match rule {
        StepRule::TraceScaled => (0.001 / v.trace()).sqrt(),
        StepRule::Fixed(g) => g,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfuConfig {
    pub iters: usize,
    pub step_rule: StepRule,
    /// Objective multiplier L.
    pub scale_l: f64,
    /// Squared trace-ball radius s².
    pub trace_bound: f64,
    /// Upper bound on ‖A + BK‖ for an iterate to count as admissible.
    /// `f64::INFINITY` disables the check.
    pub admissible_norm: f64,
    pub seed: u64,
    /// Random feasible restarts tried when no iterate is admissible.
    pub restarts: usize,
    pub projection_tol: f64,
    pub dare: DareOptions,
}

impl OfuConfig {
    pub fn new(scale_l: f64, trace_bound: f64, admissible_norm: f64) -> Self {
        Self {
            iters: 100,
            step_rule: StepRule::TraceScaled,
            scale_l,
            trace_bound,
            admissible_norm,
            seed: 0,
            restarts: 0,
            projection_tol: 1e-10,
            dare: DareOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::Config("OFU needs at least one iteration".into()));
        }
        if !(self.scale_l >= 0.0) {
            return Err(Error::Config(format!("objective scale must be nonnegative, got {}", self.scale_l)));
        }
        if !(self.trace_bound > 0.0) {
            return Err(Error::Config("trace bound must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OfuOutcome {
    pub param: SystemParam,
    pub solution: RiccatiSolution,
    /// L·trace(P) at `param`.
    pub objective: f64,
    /// Objective at the projected warm start, if it was admissible.
    pub warm_objective: Option<f64>,
}

struct FeasibleSet<'a> {
    projector: EllipsoidProjector,
    est: &'a ConfidenceEllipsoid,
    s_sq: f64,
    tol: f64,
}

impl FeasibleSet<'_> {
    fn in_ball(&self, m: &Mat) -> bool {
        m.norm_squared() <= self.s_sq
    }

    fn in_ellipsoid(&self, m: &Mat) -> bool {
        self.est.quadratic_form(m).is_ok_and(|q| q <= self.est.beta())
    }

    /// A point of the intersection near `theta`, or None if none was found.
    fn project(&self, theta: &Mat) -> Result<Option<Mat>> {
        let mut y = self.projector.project(theta, self.tol)?;
        if self.in_ball(&y) {
            return Ok(Some(y));
        }
        let center = self.est.theta_hat();
        let center_in_ball = self.in_ball(center);
        let rounds = if center_in_ball { 10 } else { 200 };
        for _ in 0..rounds {
            let scaled = &y * (self.s_sq / y.norm_squared()).sqrt();
            if self.in_ellipsoid(&scaled) {
                return Ok(Some(scaled));
            }
            y = self.projector.project(&scaled, self.tol)?;
            if self.in_ball(&y) {
                return Ok(Some(y));
            }
        }
        if !center_in_ball {
            return Ok(None);
        }
        // Both Θ̂ and y lie in the ellipsoid; walk the segment from Θ̂ until it
        // meets the sphere ‖Θ‖_F = s.
        let dir = &y - center;
        let a = dir.norm_squared();
        let b = 2.0 * center.dot(&dir);
        let c = center.norm_squared() - self.s_sq;
        let alpha = ((-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a)).clamp(0.0, 1.0);
        let mut point = center + dir * alpha;
        let mut shrink = alpha;
        while !self.in_ball(&point) && shrink > 0.0 {
            shrink *= 1.0 - 1e-12;
            shrink -= f64::EPSILON;
            point = center + (&y - center) * shrink.max(0.0);
        }
        Ok(self.in_ellipsoid(&point).then_some(point))
    }
}

enum Eval {
    Solved(RiccatiSolution, bool),
    Failed,
}

fn evaluate(param: &SystemParam, q: &Mat, r: &Mat, cfg: &OfuConfig) -> Result<Eval> {
    match solve_dare(param, q, r, cfg.scale_l, &cfg.dare) {
        Ok(sol) => {
            let admissible = cfg.admissible_norm.is_infinite()
                || spectral_norm(&sol.closed_loop(param)) <= cfg.admissible_norm;
            Ok(Eval::Solved(sol, admissible))
        }
        Err(Error::NotStabilizable { .. } | Error::NonConvergence { .. } | Error::NumericalDomain(_)) => {
            Ok(Eval::Failed)
        }
        Err(e) => Err(e),
    }
}

struct Best {
    param: SystemParam,
    solution: RiccatiSolution,
}

fn descend(
    start: Mat,
    set: &FeasibleSet<'_>,
    q: &Mat,
    r: &Mat,
    cfg: &OfuConfig,
    gamma: f64,
    best: &mut Option<Best>,
) -> Result<Option<f64>> {
    let n = set.est.n();
    let fallback = set.project(set.est.theta_hat())?;
    let mut current = start;
    let mut start_objective = None;
    for k in 0..=cfg.iters {
        let param = SystemParam::new(current.clone(), n)?;
        let next = match evaluate(&param, q, r, cfg)? {
            Eval::Solved(sol, admissible) => {
                if admissible {
                    if k == 0 {
                        start_objective = Some(sol.j);
                    }
                    let better = best.as_ref().is_none_or(|b| sol.j < b.solution.j);
                    if better {
                        *best = Some(Best {
                            param: param.clone(),
                            solution: sol.clone(),
                        });
                    }
                }
                if k == cfg.iters {
                    break;
                }
                let grad = grad_from_solution(&param, &sol, cfg.scale_l)?;
                &current - grad * gamma
            }
            Eval::Failed => {
                if k == cfg.iters {
                    break;
                }
                // No gradient here; retreat halfway toward the feasible center.
                match &fallback {
                    Some(c) => (&current + c) * 0.5,
                    None => break,
                }
            }
        };
        match set.project(&next)? {
            Some(p) => current = p,
            None => break,
        }
    }
    Ok(start_objective)
}

/// Runs the projected gradient search from `warm_start`.
///
/// Every iterate lies in the ellipsoid and the trace ball; the returned point
/// is the admissible iterate with the lowest objective, so it is never worse
/// than the projected warm start when that start is admissible.
pub fn ofu_select(
    est: &ConfidenceEllipsoid,
    q: &Mat,
    r_mode: &Mat,
    cfg: &OfuConfig,
    warm_start: &SystemParam,
) -> Result<OfuOutcome> {
    cfg.validate()?;
    crate::error::dim_check("ofu warm start", est.theta_hat().shape(), warm_start.theta().shape())?;
    let set = FeasibleSet {
        projector: est.projector(),
        est,
        s_sq: cfg.trace_bound,
        tol: cfg.projection_tol,
    };
    let gamma = step_size(est.v(), cfg.step_rule);
    let mut best = None;
    let mut warm_objective = None;
    if let Some(start) = set.project(warm_start.theta())? {
        warm_objective = descend(start, &set, q, r_mode, cfg, gamma, &mut best)?;
    }
    if best.is_none() && cfg.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (rows, cols) = est.theta_hat().shape();
        let radius = est.beta().sqrt();
        if let Some(start) = set.project(est.theta_hat())? {
            descend(start, &set, q, r_mode, cfg, gamma, &mut best)?;
        }
        for _ in 0..cfg.restarts {
            if best.is_some() {
                break;
            }
            // Random point inside the ellipsoid: Θ̂ + V^{-1/2}·(random direction)·√β·u.
            let dir = Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
            let form = (dir.transpose() * est.v() * &dir).trace();
            let scale = if form > 0.0 { radius * rng.random::<f64>() / form.sqrt() } else { 0.0 };
            let candidate = est.theta_hat() + dir * scale;
            if let Some(start) = set.project(&candidate)? {
                descend(start, &set, q, r_mode, cfg, gamma, &mut best)?;
            }
        }
    }
    let best = best.ok_or(Error::NoAdmissiblePoint)?;
    Ok(OfuOutcome {
        objective: best.solution.j,
        param: best.param,
        solution: best.solution,
        warm_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{RadiusRule, RegressorSample};
    use crate::linalg::Vector;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    /// 1×1 autonomous estimator (d = 0) with center `c`, V = v, radius² β.
    fn interval(c: f64, v: f64, beta: f64) -> ConfidenceEllipsoid {
        let lambda = v / 2.0;
        let mut est = ConfidenceEllipsoid::new(1, 1, lambda, 0.1, RadiusRule::Fixed { beta }).unwrap();
        // One sample z with z² = v/2 and x chosen so that the center lands on c.
        let z = lambda.sqrt();
        est.rls_update(&RegressorSample::new(
            Vector::from_element(1, z),
            Vector::from_element(1, c * v / z),
        ))
        .unwrap();
        est
    }

    #[test]
    fn step_rule_examples() {
        let v = Mat::identity(4, 4);
        assert_relative_eq!(step_size(&v, StepRule::TraceScaled), (0.001f64 / 4.0).sqrt());
        assert_relative_eq!(
            step_size(&(v.clone() * 4.0), StepRule::TraceScaled),
            0.5 * step_size(&v, StepRule::TraceScaled)
        );
        assert_eq!(step_size(&v, StepRule::Fixed(0.01)), 0.01);
    }

    #[test]
    fn singleton_returns_center() {
        let theta = SystemParam::from_ab(
            &Mat::from_row_slice(2, 2, &[0.9, 0.2, 0.0, 0.8]),
            &Mat::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let mut est = ConfidenceEllipsoid::new(2, 3, 1e-8, 0.1, RadiusRule::Fixed { beta: 0.0 }).unwrap();
        for k in 0..20 {
            let z = Vector::from_fn(3, |i, _| ((k * 7 + i * 3) % 5) as f64 - 2.0);
            let x = theta.theta().transpose() * &z;
            est.rls_update(&RegressorSample::new(z, x)).unwrap();
        }
        let q = Mat::identity(2, 2);
        let r = Mat::identity(1, 1);
        let cfg = OfuConfig::new(1.0, 100.0, f64::INFINITY);
        let out = ofu_select(&est, &q, &r, &cfg, &SystemParam::zeros(2, 1)).unwrap();
        assert!((out.param.theta() - theta.theta()).norm() < 1e-6);
        let exact = solve_dare(&theta, &q, &r, 1.0, &DareOptions::default()).unwrap();
        assert_relative_eq!(out.solution.p, exact.p, epsilon = 1e-5);
    }

    #[test]
    fn scalar_moves_toward_smaller_drift() {
        // Feasible interval [0.4, 0.8]; J = q/(1−a²) is smallest at a = 0.4.
        let est = interval(0.6, 1.0, 0.04);
        let q = Mat::identity(1, 1);
        let r = Mat::zeros(0, 0);
        let mut cfg = OfuConfig::new(1.0, 4.0, f64::INFINITY);
        cfg.step_rule = StepRule::Fixed(0.05);
        let warm = SystemParam::new(Mat::from_element(1, 1, 0.8), 1).unwrap();
        let out = ofu_select(&est, &q, &r, &cfg, &warm).unwrap();
        let grid_min = (0..=4000)
            .map(|k| 0.4 + k as f64 * 1e-4)
            .map(|a| 1.0 / (1.0 - a * a))
            .fold(f64::INFINITY, f64::min);
        assert!(out.param.theta()[(0, 0)] < 0.45);
        assert!(out.objective <= grid_min + 1e-2);
        assert!(out.objective <= out.warm_objective.unwrap());
    }

    #[test]
    fn trace_ball_is_enforced() {
        // Ellipsoid reaches out to 0.8 but the trace ball stops at 0.5.
        let est = interval(0.0, 1.0, 0.64);
        let q = Mat::identity(1, 1);
        let r = Mat::zeros(0, 0);
        let cfg = OfuConfig::new(1.0, 0.25, f64::INFINITY);
        let warm = SystemParam::new(Mat::from_element(1, 1, 0.8), 1).unwrap();
        let out = ofu_select(&est, &q, &r, &cfg, &warm).unwrap();
        assert!(out.param.theta().norm_squared() <= 0.25);
        assert!(est.contains(&out.param).unwrap());
    }

    #[test]
    fn no_admissible_point() {
        let est = interval(0.6, 1.0, 0.01);
        let q = Mat::identity(1, 1);
        let r = Mat::zeros(0, 0);
        let mut cfg = OfuConfig::new(1.0, 4.0, 0.1);
        cfg.restarts = 3;
        let warm = SystemParam::new(Mat::from_element(1, 1, 0.6), 1).unwrap();
        assert!(matches!(
            ofu_select(&est, &q, &r, &cfg, &warm),
            Err(Error::NoAdmissiblePoint)
        ));
    }

    #[test]
    fn deterministic() {
        let est = interval(0.3, 2.0, 0.1);
        let q = Mat::identity(1, 1);
        let r = Mat::zeros(0, 0);
        let cfg = OfuConfig::new(1.5, 4.0, f64::INFINITY);
        let warm = est.center();
        let a = ofu_select(&est, &q, &r, &cfg, &warm).unwrap();
        let b = ofu_select(&est, &q, &r, &cfg, &warm).unwrap();
        assert_eq!(a.param, b.param);
        assert_eq!(a.objective, b.objective);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn optimism_on_intervals(c in -0.6f64..0.6, half in 0.01f64..0.25, t in 1usize..10_000) {
            let v = t as f64;
            let beta = half * half * v;
            let est = interval(c, v, beta);
            let q = Mat::identity(1, 1);
            let r = Mat::zeros(0, 0);
            let mut cfg = OfuConfig::new(1.0, 1.0, f64::INFINITY);
            cfg.step_rule = StepRule::Fixed(0.05);
            let warm = est.center();
            let out = ofu_select(&est, &q, &r, &cfg, &warm).unwrap();
            let (lo, hi) = (c - half, c + half);
            let steps = ((hi - lo) / 1e-4).ceil() as usize;
            let grid_min = (0..=steps)
                .map(|k| (lo + k as f64 * 1e-4).min(hi))
                .map(|a| 1.0 / (1.0 - a * a))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(out.objective <= grid_min + 1.0 / v.sqrt() + 1e-6);
            prop_assert!(est.contains(&out.param).unwrap());
            prop_assert!(out.objective <= out.warm_objective.unwrap() + 1e-15);
        }

        #[test]
        fn feasible_and_monotone(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Mat::from_fn(2, 2, |_, _| rng.random_range(-0.6..0.6));
            let b = Mat::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
            let truth = SystemParam::from_ab(&a, &b).unwrap();
            let rule = RadiusRule::Central { s: 3.0, sigma_w: 0.1 };
            let mut est = ConfidenceEllipsoid::new(2, 4, 1.0, 0.1, rule).unwrap();
            for _ in 0..30 {
                let z = Vector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
                let noise = Vector::from_fn(2, |_, _| rng.random_range(-0.1..0.1));
                let x = truth.theta().transpose() * &z + noise;
                est.rls_update(&RegressorSample::new(z, x)).unwrap();
            }
            let q = Mat::identity(2, 2);
            let r = Mat::identity(2, 2);
            let mut cfg = OfuConfig::new(0.01, 9.0, f64::INFINITY);
            cfg.seed = seed;
            cfg.restarts = 5;
            let out = ofu_select(&est, &q, &r, &cfg, &est.center()).unwrap();
            prop_assert!(est.contains(&out.param).unwrap());
            prop_assert!(out.param.trace_norm_sq() <= 9.0);
            if let Some(w) = out.warm_objective {
                prop_assert!(out.objective <= w);
            }
        }
    }
}
