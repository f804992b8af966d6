//! Regularized least squares with confidence ellipsoids
//! {Θ : tr((Θ̂−Θ)ᵀ V (Θ̂−Θ)) ≤ β}.

use serde::{Deserialize, Serialize};

use crate::control::SystemParam;
use crate::error::{dim_check, Error, Result};
use crate::linalg::{log_det_spd, to_rows, Mat, Vector};
use crate::mode::ActuationMode;

const REFACTOR_EVERY: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSample {
    pub z: Vector,
    pub x_next: Vector,
}

impl RegressorSample {
    pub fn new(z: Vector, x_next: Vector) -> Self {
        Self { z, x_next }
    }
}

/// How the squared radius β is derived from the current Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadiusRule {
    /// Per-mode radius; the last term accounts for the unmodelled actuators
    /// driven by exploration noise.
    Mode {
        s: f64,
        sigma_w: f64,
        sigma_nu: f64,
        b_bar_norm: f64,
    },
    /// Radius of the augmented full-actuation ellipsoid.
    Central { s: f64, sigma_w: f64 },
    Fixed { beta: f64 },
}

#[derive(Debug, Clone)]
pub struct ConfidenceEllipsoid {
    n: usize,
    theta_hat: Mat,
    v: Mat,
    v_inv: Mat,
    zx: Mat,
    lambda: f64,
    delta: f64,
    beta: f64,
    count: usize,
    log_det_v: f64,
    since_refactor: usize,
    rule: RadiusRule,
}

/// Half the log of det(V)/det(λI), floored at zero.
fn half_log_ratio(log_det_v: f64, p: usize, lambda: f64) -> f64 {
    (0.5 * (log_det_v - p as f64 * lambda.ln())).max(0.0)
}

fn log_term(scale: f64, half_log_ratio: f64, delta: f64) -> Result<f64> {
    // log(scale · ratio^{1/2} / δ)
    let arg = scale.ln() + half_log_ratio - delta.ln();
    if arg < 0.0 {
        return Err(Error::NumericalDomain(format!(
            "confidence radius log argument below 1 (log = {arg:e})"
        )));
    }
    Ok(arg)
}

/// Squared per-mode radius, given ½·log(det V / det λI).
#[allow(clippy::too_many_arguments)]
pub fn beta_mode_from_ratio(
    half_log_ratio: f64,
    lambda: f64,
    delta: f64,
    s: f64,
    sigma_w: f64,
    sigma_nu: f64,
    b_bar_norm: f64,
    n: usize,
    d_i: usize,
) -> Result<f64> {
    let h = half_log_ratio.max(0.0);
    let mut r = lambda.sqrt() * s + sigma_w * (2.0 * n as f64 * log_term(n as f64, h, delta)?).sqrt();
    if b_bar_norm > 0.0 && sigma_nu > 0.0 && d_i > 0 {
        r += b_bar_norm * sigma_nu * (2.0 * d_i as f64 * log_term(d_i as f64, h, delta)?).sqrt();
    }
    Ok(r * r)
}

/// Squared central radius, given ½·log(det V / det λI).
pub fn beta_central_from_ratio(
    half_log_ratio: f64,
    lambda: f64,
    delta: f64,
    s: f64,
    sigma_w: f64,
    n: usize,
) -> Result<f64> {
    let h = half_log_ratio.max(0.0);
    let r = lambda.sqrt() * s + sigma_w * (2.0 * n as f64 * log_term(1.0, h, delta)?).sqrt();
    Ok(r * r)
}

/// Per-mode squared radius at the estimator's current Gram matrix.
pub fn beta_mode(
    est: &ConfidenceEllipsoid,
    s_i: f64,
    sigma_w: f64,
    sigma_nu: f64,
    norm_b_bar: f64,
    n: usize,
    d_i: usize,
) -> Result<f64> {
    beta_mode_from_ratio(
        est.half_log_det_ratio(),
        est.lambda,
        est.delta,
        s_i,
        sigma_w,
        sigma_nu,
        norm_b_bar,
        n,
        d_i,
    )
}

pub fn beta_central(est: &ConfidenceEllipsoid, s: f64, sigma_w: f64, n: usize) -> Result<f64> {
    beta_central_from_ratio(est.half_log_det_ratio(), est.lambda, est.delta, s, sigma_w, n)
}

impl ConfidenceEllipsoid {
    /// Empty estimator: V = λI, ZX = 0, Θ̂ = 0.
    pub fn new(n: usize, p: usize, lambda: f64, delta: f64, rule: RadiusRule) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0,1), got {delta}")));
        }
        if p < n {
            return Err(Error::DimensionMismatch {
                context: "ellipsoid",
                expected: format!("p >= {n}"),
                found: format!("p = {p}"),
            });
        }
        let mut est = Self {
            n,
            theta_hat: Mat::zeros(p, n),
            v: Mat::identity(p, p) * lambda,
            v_inv: Mat::identity(p, p) / lambda,
            zx: Mat::zeros(p, n),
            lambda,
            delta,
            beta: 0.0,
            count: 0,
            log_det_v: p as f64 * lambda.ln(),
            since_refactor: 0,
            rule,
        };
        est.beta = est.compute_beta()?;
        Ok(est)
    }

    /// Regressor dimension n + d_i.
    pub fn p(&self) -> usize {
        self.v.nrows()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn theta_hat(&self) -> &Mat {
        &self.theta_hat
    }

    pub fn center(&self) -> SystemParam {
        SystemParam::new(self.theta_hat.clone(), self.n).expect("center has estimator shape")
    }

    pub fn v(&self) -> &Mat {
        &self.v
    }

    pub fn zx(&self) -> &Mat {
        &self.zx
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn rule(&self) -> RadiusRule {
        self.rule
    }

    pub fn log_det_v(&self) -> f64 {
        self.log_det_v
    }

    pub fn half_log_det_ratio(&self) -> f64 {
        half_log_ratio(self.log_det_v, self.p(), self.lambda)
    }

    pub fn set_rule(&mut self, rule: RadiusRule) -> Result<()> {
        self.rule = rule;
        self.beta = self.compute_beta()?;
        Ok(())
    }

    fn compute_beta(&self) -> Result<f64> {
        match self.rule {
            RadiusRule::Mode {
                s,
                sigma_w,
                sigma_nu,
                b_bar_norm,
            } => beta_mode(self, s, sigma_w, sigma_nu, b_bar_norm, self.n, self.p() - self.n),
            RadiusRule::Central { s, sigma_w } => beta_central(self, s, sigma_w, self.n),
            RadiusRule::Fixed { beta } => Ok(beta),
        }
    }

    /// Absorbs one regressor/next-state pair.
    pub fn rls_update(&mut self, sample: &RegressorSample) -> Result<()> {
        let p = self.p();
        dim_check("rls_update regressor", (p, 1), (sample.z.len(), 1))?;
        dim_check("rls_update next state", (self.n, 1), (sample.x_next.len(), 1))?;
        if !sample.z.iter().chain(sample.x_next.iter()).all(|v| v.is_finite()) {
            return Err(Error::NumericalDomain("non-finite regressor sample".into()));
        }
        let z = &sample.z;
        self.v += z * z.transpose();
        self.zx += z * sample.x_next.transpose();
        self.count += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        } else {
            // Sherman–Morrison on V⁻¹ and the matrix determinant lemma on log det V.
            let vz = &self.v_inv * z;
            let denom = 1.0 + z.dot(&vz);
            self.v_inv -= &vz * vz.transpose() / denom;
            self.log_det_v += denom.ln();
            self.theta_hat = &self.v_inv * &self.zx;
        }
        self.beta = self.compute_beta()?;
        Ok(())
    }

    /// Recomputes V⁻¹, log det V and Θ̂ from a fresh Cholesky factorization.
    pub fn refactor(&mut self) -> Result<()> {
        let chol = self
            .v
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NumericalDomain("Gram matrix lost positive definiteness".into()))?;
        self.v_inv = chol.inverse();
        self.log_det_v = log_det_spd(&self.v)?;
        self.theta_hat = chol.solve(&self.zx);
        self.since_refactor = 0;
        Ok(())
    }

    /// tr((Θ̂−Θ)ᵀ V (Θ̂−Θ)).
    pub fn quadratic_form(&self, theta: &Mat) -> Result<f64> {
        dim_check("ellipsoid membership", self.theta_hat.shape(), theta.shape())?;
        let diff = &self.theta_hat - theta;
        Ok((diff.transpose() * &self.v * &diff).trace())
    }

    pub fn contains(&self, theta: &SystemParam) -> Result<bool> {
        Ok(self.quadratic_form(theta.theta())? <= self.beta)
    }

    /// quadratic form divided by β; ≤ 1 inside the ellipsoid.
    pub fn conf_ratio(&self, theta: &Mat) -> Result<f64> {
        let q = self.quadratic_form(theta)?;
        Ok(if self.beta > 0.0 {
            q / self.beta
        } else if q == 0.0 {
            0.0
        } else {
            f64::INFINITY
        })
    }

    pub fn record(&self) -> EllipsoidRecord {
        EllipsoidRecord {
            theta_hat: to_rows(&self.theta_hat),
            v: to_rows(&self.v),
            beta: self.beta,
            lambda: self.lambda,
            delta: self.delta,
            count: self.count,
        }
    }

    pub fn projector(&self) -> EllipsoidProjector {
        EllipsoidProjector::new(self)
    }
}

/// JSON-friendly snapshot of an estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidRecord {
    pub theta_hat: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub beta: f64,
    pub lambda: f64,
    pub delta: f64,
    pub count: usize,
}

/// Euclidean projection onto a fixed ellipsoid. Caches the eigendecomposition
/// of V so repeated projections (as in the optimistic search) are cheap.
#[derive(Debug, Clone)]
pub struct EllipsoidProjector {
    center: Mat,
    v: Mat,
    eigvecs: Mat,
    eigvals: Vector,
    beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionInfo {
    /// Lagrange multiplier of the active constraint (0 if interior).
    pub multiplier: f64,
    /// |form − β| before the final radial clamp.
    pub residual: f64,
    pub iterations: usize,
}

impl EllipsoidProjector {
    pub fn new(est: &ConfidenceEllipsoid) -> Self {
        let eig = est.v.clone().symmetric_eigen();
        Self {
            center: est.theta_hat.clone(),
            v: est.v.clone(),
            eigvecs: eig.eigenvectors,
            // V ⪰ λI exactly; round-off at large scale can break that.
            eigvals: eig.eigenvalues.map(|l| l.max(est.lambda)),
            beta: est.beta,
        }
    }

    fn form(&self, theta: &Mat) -> f64 {
        let diff = theta - &self.center;
        (diff.transpose() * &self.v * &diff).trace()
    }

    pub fn project(&self, theta: &Mat, tol: f64) -> Result<Mat> {
        self.project_with_info(theta, tol).map(|(m, _)| m)
    }

    /// Minimizes ‖Θ' − Θ‖_F subject to the ellipsoid constraint.
    ///
    /// With E = Uᵀ(Θ − Θ̂) in the eigenbasis of V, the minimizer is
    /// Θ̂ + U diag(1/(1+μλⱼ)) E where μ ≥ 0 solves
    /// φ(μ) = Σ λⱼ‖Eⱼ‖²/(1+μλⱼ)² = β. Newton is run on 1/√φ − 1/√β, which is
    /// concave and increasing in μ, so iterates from μ = 0 approach the root
    /// monotonically; bisection is the fallback.
    pub fn project_with_info(&self, theta: &Mat, tol: f64) -> Result<(Mat, ProjectionInfo)> {
        dim_check("ellipsoid projection", self.center.shape(), theta.shape())?;
        let form = self.form(theta);
        if form <= self.beta {
            let info = ProjectionInfo {
                multiplier: 0.0,
                residual: 0.0,
                iterations: 0,
            };
            return Ok((theta.clone(), info));
        }
        if self.beta <= 0.0 {
            let info = ProjectionInfo {
                multiplier: f64::INFINITY,
                residual: 0.0,
                iterations: 0,
            };
            return Ok((self.center.clone(), info));
        }

        let e = self.eigvecs.transpose() * (theta - &self.center);
        let weights: Vec<(f64, f64)> = (0..self.eigvals.len())
            .map(|j| (self.eigvals[j], e.row(j).norm_squared()))
            .collect();
        let phi = |mu: f64| -> (f64, f64) {
            let mut f = 0.0;
            let mut df = 0.0;
            for &(l, w) in &weights {
                let den = 1.0 + mu * l;
                f += l * w / (den * den);
                df += -2.0 * l * l * w / (den * den * den);
            }
            (f, df)
        };
        let target = self.beta;
        let abs_tol = tol * target.max(1.0);
        let inv_sqrt_target = 1.0 / target.sqrt();

        let mut mu = 0.0;
        let mut iterations = 0;
        // With an ill-conditioned V the eigenbasis can already place the
        // point inside; the radial clamp below settles the difference.
        let mut converged = phi(0.0).0 <= target + abs_tol;
        for _ in 0..if converged { 0 } else { 100 } {
            iterations += 1;
            let (f, df) = phi(mu);
            if (f - target).abs() <= abs_tol {
                converged = true;
                break;
            }
            // h(μ) = φ^{-1/2} − β^{-1/2}, h' = −½ φ^{-3/2} φ'.
            let h = 1.0 / f.sqrt() - inv_sqrt_target;
            let dh = -0.5 * df / (f * f.sqrt());
            let step = h / dh;
            if !step.is_finite() || dh <= 0.0 {
                break;
            }
            let next = mu - step;
            if next < 0.0 || !next.is_finite() {
                break;
            }
            mu = next;
        }

        if !converged {
            let mut lo = 0.0;
            let mut hi = 1.0 / self.eigvals.min().max(f64::MIN_POSITIVE);
            let mut guard = 0;
            while phi(hi).0 > target {
                hi *= 2.0;
                guard += 1;
                if guard > 2000 {
                    return Err(Error::NonConvergence {
                        residual: phi(hi).0 - target,
                        iterations,
                    });
                }
            }
            for _ in 0..200 {
                iterations += 1;
                mu = 0.5 * (lo + hi);
                let f = phi(mu).0;
                if (f - target).abs() <= abs_tol {
                    converged = true;
                    break;
                }
                if f > target {
                    lo = mu;
                } else {
                    hi = mu;
                }
                // Steep φ: the bracket hits machine precision before the
                // residual does. The radial clamp below restores feasibility.
                if hi - lo <= 4.0 * f64::EPSILON * hi {
                    mu = hi;
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NonConvergence {
                    residual: (phi(mu).0 - target).abs(),
                    iterations,
                });
            }
        }

        let residual = (phi(mu).0 - target).abs();
        let mut scaled = e;
        for j in 0..scaled.nrows() {
            let factor = 1.0 / (1.0 + mu * self.eigvals[j]);
            scaled.row_mut(j).scale_mut(factor);
        }
        let mut diff = &self.eigvecs * scaled;
        // Round-off may leave the point a hair outside; pull it back radially.
        let q = (diff.transpose() * &self.v * &diff).trace();
        if q > target {
            diff *= (target / q).sqrt();
        }
        let mut out = &self.center + &diff;
        let mut shrink = 1.0;
        while self.form(&out) > target && shrink > 0.0 {
            shrink -= 1e-12;
            out = &self.center + &diff * shrink;
        }
        let info = ProjectionInfo {
            multiplier: mu,
            residual,
            iterations,
        };
        Ok((out, info))
    }
}

/// Euclidean projection of `theta` onto the estimator's confidence set.
pub fn project_to_ellipsoid(
    theta: &SystemParam,
    est: &ConfidenceEllipsoid,
    tol: f64,
) -> Result<SystemParam> {
    let projected = est.projector().project(theta.theta(), tol)?;
    SystemParam::new(projected, est.n())
}

/// Full input ū: mode inputs plus their exploration noise on the mode's
/// actuators, pure noise on the rest.
pub fn scatter_input(u_mode: &Vector, nu: &Vector, mode: &ActuationMode) -> Result<Vector> {
    let d = nu.len();
    mode.check_range(d)?;
    dim_check("mode input", (mode.d_i(), 1), (u_mode.len(), 1))?;
    let mut u_bar = nu.clone();
    for (k, col) in mode.columns().into_iter().enumerate() {
        u_bar[col] += u_mode[k];
    }
    Ok(u_bar)
}

/// Full-dimension regressor z̄ = (x; ū) for the central estimator.
pub fn augment_central(
    x: &Vector,
    u_mode: &Vector,
    nu: &Vector,
    mode: &ActuationMode,
) -> Result<Vector> {
    let u_bar = scatter_input(u_mode, nu, mode)?;
    Ok(stack(x, &u_bar))
}

pub fn stack(x: &Vector, u: &Vector) -> Vector {
    let mut z = Vector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mode::SideInfo;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    fn fixed(n: usize, p: usize, lambda: f64, beta: f64) -> ConfidenceEllipsoid {
        ConfidenceEllipsoid::new(n, p, lambda, 0.1, RadiusRule::Fixed { beta }).unwrap()
    }

    fn info() -> SideInfo {
        SideInfo {
            s: 1.0,
            upsilon: 0.5,
            eta: 1.0,
            gamma: 0.0,
            theta_bound: 1.0,
            kappa: 1.5,
            d_bound: 1.0,
            b_bar_bound: 0.0,
        }
    }

    #[test]
    fn empty_estimator_has_zero_center() {
        let est = fixed(2, 4, 0.5, 1.0);
        assert_eq!(est.theta_hat(), &Mat::zeros(4, 2));
        assert_eq!(est.v(), &(Mat::identity(4, 4) * 0.5));
        assert_eq!(est.count(), 0);
    }

    #[test]
    fn one_sample_matches_direct_solve() {
        let mut est = fixed(1, 2, 0.7, 1.0);
        let z = Vector::from_vec(vec![1.3, -0.4]);
        let x = Vector::from_vec(vec![0.9]);
        est.rls_update(&RegressorSample::new(z.clone(), x.clone())).unwrap();
        // Explicit 2×2 inverse of zzᵀ + λI.
        let (a, b, c) = (z[0] * z[0] + 0.7, z[0] * z[1], z[1] * z[1] + 0.7);
        let det = a * c - b * b;
        let rhs = (z[0] * x[0], z[1] * x[0]);
        let expect = ((c * rhs.0 - b * rhs.1) / det, (-b * rhs.0 + a * rhs.1) / det);
        assert_relative_eq!(est.theta_hat()[(0, 0)], expect.0, epsilon = 1e-14);
        assert_relative_eq!(est.theta_hat()[(1, 0)], expect.1, epsilon = 1e-14);
        assert_eq!(est.count(), 1);
    }

    #[test]
    fn noiseless_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = Mat::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let mut est = fixed(2, 4, 1e-8, 1.0);
        for _ in 0..500 {
            let z = Vector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let x = theta.transpose() * &z;
            est.rls_update(&RegressorSample::new(z, x)).unwrap();
        }
        assert!((est.theta_hat() - &theta).norm() <= 1e-6);
    }

    #[test]
    fn incremental_state_matches_refactor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut est = fixed(2, 3, 1.0, 1.0);
        for _ in 0..300 {
            let z = Vector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let x = Vector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            est.rls_update(&RegressorSample::new(z, x)).unwrap();
        }
        let direct = est.v().clone().cholesky().unwrap().solve(est.zx());
        assert_relative_eq!(est.theta_hat().clone(), direct, epsilon = 1e-9);
        assert_relative_eq!(est.log_det_v(), log_det_spd(est.v()).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        let mut est = fixed(2, 3, 1.0, 1.0);
        let bad = RegressorSample::new(Vector::zeros(2), Vector::zeros(2));
        assert!(matches!(est.rls_update(&bad), Err(Error::DimensionMismatch { .. })));
        let bad = RegressorSample::new(Vector::zeros(3), Vector::zeros(1));
        assert!(matches!(est.rls_update(&bad), Err(Error::DimensionMismatch { .. })));
        let wrong = SystemParam::zeros(2, 2);
        assert!(est.contains(&wrong).is_err());
    }

    #[test]
    fn beta_at_unit_ratio() {
        let (lambda, delta, s, sw, snu, bb) = (2.0, 0.05, 1.5, 0.3, 0.2, 0.8);
        let est = ConfidenceEllipsoid::new(
            3,
            5,
            lambda,
            delta,
            RadiusRule::Mode {
                s,
                sigma_w: sw,
                sigma_nu: snu,
                b_bar_norm: bb,
            },
        )
        .unwrap();
        let expect = (lambda.sqrt() * s
            + sw * (2.0 * 3.0 * (3.0 / delta).ln()).sqrt()
            + bb * snu * (2.0 * 2.0 * (2.0 / delta).ln()).sqrt())
        .powi(2);
        assert_relative_eq!(est.beta(), expect, epsilon = 1e-12);
    }

    #[test]
    fn full_mode_drops_third_term() {
        let (lambda, delta, s, sw) = (1.0, 0.1, 2.0, 0.5);
        let b = beta_mode_from_ratio(0.7, lambda, delta, s, sw, 0.3, 0.0, 2, 3).unwrap();
        let expect = (s + sw * (2.0 * 2.0 * (2.0f64.ln() + 0.7 - delta.ln())).sqrt()).powi(2);
        assert_relative_eq!(b, expect, epsilon = 1e-12);
        // The central radius has no n inside the log.
        let c = beta_central_from_ratio(0.7, lambda, delta, s, sw, 2).unwrap();
        let expect = (s + sw * (2.0 * 2.0 * (0.7 - delta.ln())).sqrt()).powi(2);
        assert_relative_eq!(c, expect, epsilon = 1e-12);
    }

    #[test]
    fn beta_grows_with_gram() {
        let mut est = ConfidenceEllipsoid::new(1, 2, 1.0, 0.1, RadiusRule::Central { s: 1.0, sigma_w: 0.1 })
            .unwrap();
        let before = est.beta();
        est.rls_update(&RegressorSample::new(Vector::from_vec(vec![1.0, 1.0]), Vector::from_vec(vec![0.0])))
            .unwrap();
        assert!(est.beta() > before);
    }

    #[test]
    fn log_argument_domain() {
        // δ close to 1 and scale 1 keep the argument positive; a negative
        // half-log-ratio is clamped.
        assert!(beta_central_from_ratio(-1e-15, 1.0, 0.5, 1.0, 1.0, 1).is_ok());
        assert!(log_term(0.5, 0.0, 0.9).is_err());
    }

    #[test]
    fn membership() {
        let mut est = fixed(1, 2, 1.0, 0.0);
        est.rls_update(&RegressorSample::new(Vector::from_vec(vec![1.0, 0.0]), Vector::from_vec(vec![0.5])))
            .unwrap();
        est.set_rule(RadiusRule::Fixed { beta: 2.0 }).unwrap();
        assert!(est.contains(&est.center()).unwrap());
        // V = diag(2, 1); eigenvector e₂ with eigenvalue 1: c²·1 = β on the boundary.
        let mut boundary = est.theta_hat().clone();
        boundary[(1, 0)] += 2.0f64.sqrt();
        let form = est.quadratic_form(&boundary).unwrap();
        est.set_rule(RadiusRule::Fixed { beta: form }).unwrap();
        assert!(est.contains(&SystemParam::new(boundary.clone(), 1).unwrap()).unwrap());
        boundary[(1, 0)] += 1e-6;
        assert!(!est.contains(&SystemParam::new(boundary, 1).unwrap()).unwrap());
    }

    #[test]
    fn scalar_projection_clamps() {
        let mut est = fixed(1, 1, 1.0, 0.0);
        est.rls_update(&RegressorSample::new(Vector::from_vec(vec![2.0]), Vector::from_vec(vec![1.0])))
            .unwrap();
        est.set_rule(RadiusRule::Fixed { beta: 0.2 }).unwrap();
        let v = est.v()[(0, 0)];
        let center = est.theta_hat()[(0, 0)];
        let proj = est.projector();
        let inside = Mat::from_element(1, 1, center + 0.1);
        assert_eq!(proj.project(&inside, 1e-10).unwrap(), inside);
        let far = Mat::from_element(1, 1, center + 5.0);
        let got = proj.project(&far, 1e-10).unwrap()[(0, 0)];
        assert_relative_eq!(got, center + (0.2 / v).sqrt(), epsilon = 1e-9);
        let far = Mat::from_element(1, 1, center - 5.0);
        let got = proj.project(&far, 1e-10).unwrap()[(0, 0)];
        assert_relative_eq!(got, center - (0.2 / v).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn diagonal_projection_matches_grid() {
        // Θ is 2×1, V = diag(4, 1), center 0, β = 1: boundary (cos t / 2, sin t).
        let mut est = fixed(1, 2, 1.0, 1.0);
        est.rls_update(&RegressorSample::new(Vector::from_vec(vec![3.0f64.sqrt(), 0.0]), Vector::from_vec(vec![0.0])))
            .unwrap();
        let target = Mat::from_column_slice(2, 1, &[1.5, 1.2]);
        let got = est.projector().project(&target, 1e-10).unwrap();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for k in 0..200_000 {
            let t = k as f64 / 200_000.0 * std::f64::consts::TAU;
            let p = (t.cos() / 2.0, t.sin());
            let dist = (p.0 - 1.5).powi(2) + (p.1 - 1.2).powi(2);
            if dist < best.0 {
                best = (dist, p.0, p.1);
            }
        }
        assert!((got[(0, 0)] - best.1).abs() < 1e-3);
        assert!((got[(1, 0)] - best.2).abs() < 1e-3);
    }

    #[test]
    fn zero_radius_projects_to_center() {
        let est = fixed(1, 2, 1.0, 0.0);
        let got = est.projector().project(&Mat::from_element(2, 1, 3.0), 1e-10).unwrap();
        assert_eq!(got, Mat::zeros(2, 1));
    }

    #[test]
    fn scatter_examples() {
        let full = ActuationMode::new(1, vec![1, 2, 3], info()).unwrap();
        let u = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(scatter_input(&u, &Vector::zeros(3), &full).unwrap(), u);
        let partial = ActuationMode::new(2, vec![1, 2], info()).unwrap();
        let nu = Vector::from_vec(vec![0.1, 0.2, 0.3]);
        let got = scatter_input(&Vector::from_vec(vec![1.0, 2.0]), &nu, &partial).unwrap();
        assert_eq!(got, Vector::from_vec(vec![1.1, 2.2, 0.3]));
        assert_eq!(scatter_input(&Vector::zeros(2), &nu, &partial).unwrap(), nu);
        let z = augment_central(&Vector::from_vec(vec![5.0]), &Vector::from_vec(vec![1.0, 2.0]), &nu, &partial)
            .unwrap();
        assert_eq!(z.as_slice(), &[5.0, 1.1, 2.2, 0.3]);
        let bad = ActuationMode::new(3, vec![4], info()).unwrap();
        assert!(matches!(
            scatter_input(&Vector::zeros(1), &nu, &bad),
            Err(Error::IndexOutOfRange { index: 4, d: 3 })
        ));
    }

    #[test]
    fn record_roundtrip() {
        let est = fixed(1, 2, 1.0, 0.5);
        let json = serde_json::to_string(&est.record()).unwrap();
        let back: EllipsoidRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, est.record());
    }

    fn samples(seed: u64, count: usize, p: usize, n: usize) -> Vec<RegressorSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                RegressorSample::new(
                    Vector::from_fn(p, |_, _| rng.random_range(-3.0..3.0)),
                    Vector::from_fn(n, |_, _| rng.random_range(-3.0..3.0)),
                )
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn gram_stays_above_lambda(seed in 0u64..1000, lambda in 0.1f64..5.0, count in 1usize..40) {
            let mut est = fixed(2, 3, lambda, 1.0);
            for s in samples(seed, count, 3, 2) {
                est.rls_update(&s).unwrap();
                let min = crate::linalg::min_eigenvalue_sym(est.v());
                prop_assert!(min >= lambda * (1.0 - 1e-10));
                prop_assert_eq!(est.v().clone(), est.v().transpose());
            }
        }

        #[test]
        fn center_minimizes_loss(seed in 0u64..1000) {
            let data = samples(seed, 12, 3, 2);
            let mut est = fixed(2, 3, 0.5, 1.0);
            for s in &data {
                est.rls_update(s).unwrap();
            }
            let loss = |theta: &Mat| -> f64 {
                let fit: f64 = data.iter().map(|s| (&s.x_next - theta.transpose() * &s.z).norm_squared()).sum();
                fit + 0.5 * theta.norm_squared()
            };
            let base = loss(est.theta_hat());
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            for _ in 0..20 {
                let dir = Mat::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0)) * 1e-3;
                prop_assert!(loss(&(est.theta_hat() + dir)) >= base - 1e-9);
            }
        }

        #[test]
        fn radius_nondecreasing(seed in 0u64..1000) {
            let mut est = ConfidenceEllipsoid::new(
                2, 4, 1.0, 0.05,
                RadiusRule::Mode { s: 1.0, sigma_w: 0.1, sigma_nu: 0.2, b_bar_norm: 0.5 },
            ).unwrap();
            let mut prev = est.beta();
            for s in samples(seed, 30, 4, 2) {
                est.rls_update(&s).unwrap();
                prop_assert!(est.beta() >= prev);
                prev = est.beta();
            }
        }

        #[test]
        fn projection_is_nearest(seed in 0u64..1000, beta in 0.05f64..2.0) {
            let mut est = fixed(2, 3, 1.0, beta);
            for s in samples(seed, 5, 3, 2) {
                est.rls_update(&s).unwrap();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(77));
            let theta_in = est.theta_hat() + Mat::from_fn(3, 2, |_, _| rng.random_range(-3.0..3.0));
            let projector = est.projector();
            let got = projector.project(&theta_in, 1e-10).unwrap();
            prop_assert!(est.quadratic_form(&got).unwrap() <= beta * (1.0 + 1e-12));
            let dist = (&theta_in - &got).norm();
            for _ in 0..100 {
                let dir = Mat::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
                let q = (dir.transpose() * est.v() * &dir).trace();
                let boundary = est.theta_hat() + dir * (beta / q).sqrt();
                prop_assert!(dist <= (&theta_in - boundary).norm() + 1e-9);
            }
        }
    }
}
