//! Oracle checks of the numerical kernels: DARE against plain value
//! iteration, the trace gradient against central differences, and ellipsoid
//! projection against a boundary grid search.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::benchmark;
use crate::control::{grad_trace_p, solve_dare, DareOptions, SystemParam};
use crate::error::{Error, Result};
use crate::estimation::{ConfidenceEllipsoid, RadiusRule, RegressorSample};
use crate::linalg::{spectral_radius, Mat, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Value iteration P ← Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA from P = Q.
pub fn dare_value_iteration(a: &Mat, b: &Mat, q: &Mat, r: &Mat, tol: f64, max_iter: usize) -> Result<(Mat, Mat)> {
    let mut p = q.clone();
    for _ in 0..max_iter {
        let bt_p = b.transpose() * &p;
        let gain = (r + &bt_p * b)
            .lu()
            .solve(&(&bt_p * a))
            .ok_or_else(|| Error::NumericalDomain("singular R + BᵀPB".into()))?;
        let next = q + a.transpose() * &p * a - a.transpose() * &p * b * &gain;
        let next = 0.5 * (&next + next.transpose());
        let change = (&next - &p).amax();
        p = next;
        if change <= tol * p.amax().max(1.0) {
            let bt_p = b.transpose() * &p;
            let k = -(r + &bt_p * b).lu().solve(&(&bt_p * a)).expect("checked above");
            return Ok((p, k));
        }
    }
    Err(Error::NonConvergence {
        residual: f64::NAN,
        iterations: max_iter,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DareCheck {
    pub residual: f64,
    pub max_gain_diff: f64,
    pub closed_loop_radius: f64,
    pub seconds: f64,
}

pub fn check_dare_benchmark() -> Result<DareCheck> {
    let plant = benchmark::plant()?;
    let start = Instant::now();
    let sol = solve_dare(&plant.theta(), &plant.q, &plant.r, 1.0, &DareOptions::default())?;
    let seconds = start.elapsed().as_secs_f64();
    let (_, k_ref) = dare_value_iteration(&plant.a, &plant.b, &plant.q, &plant.r, 1e-15, 1_000_000)?;
    Ok(DareCheck {
        residual: sol.residual,
        max_gain_diff: (&sol.k - &k_ref).amax(),
        closed_loop_radius: spectral_radius(&(&plant.a + &plant.b * &sol.k)),
        seconds,
    })
}

/// Largest relative gradient error, ‖G − G_fd‖_max / ‖G_fd‖_max, over
/// `count` random stabilizable two-state, two-input parameters.
pub fn check_gradient(count: usize, seed: u64, h: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = Mat::identity(2, 2);
    let r = Mat::identity(2, 2);
    let opts = DareOptions::default();
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < count {
        let theta = Mat::from_fn(4, 2, |_, _| 0.6 * rng.sample::<f64, _>(StandardNormal));
        let param = SystemParam::new(theta.clone(), 2)?;
        if solve_dare(&param, &q, &r, 1.0, &opts).is_err() {
            continue;
        }
        let g = grad_trace_p(&param, &q, &r, 1.0, &opts)?;
        let mut fd = Mat::zeros(4, 2);
        for i in 0..4 {
            for j in 0..2 {
                let mut plus = theta.clone();
                plus[(i, j)] += h;
                let mut minus = theta.clone();
                minus[(i, j)] -= h;
                let jp = solve_dare(&SystemParam::new(plus, 2)?, &q, &r, 1.0, &opts)?.p.trace();
                let jm = solve_dare(&SystemParam::new(minus, 2)?, &q, &r, 1.0, &opts)?.p.trace();
                fd[(i, j)] = (jp - jm) / (2.0 * h);
            }
        }
        worst = worst.max((&g - &fd).amax() / fd.amax().max(1e-12));
        done += 1;
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionCheck {
    pub max_point_error: f64,
    pub max_boundary_residual: f64,
}

/// Closest boundary point of {y : (y−c)ᵀV(y−c) = β} to `target` by a dense
/// angular grid followed by a finer local grid.
pub fn grid_nearest_boundary(v: &Mat, center: &Vector, beta: f64, target: &Vector) -> Vector {
    let eig = v.clone().symmetric_eigen();
    let inv_sqrt = &eig.eigenvectors
        * Mat::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    let point = |phi: f64| center + beta.sqrt() * &inv_sqrt * Vector::from_vec(vec![phi.cos(), phi.sin()]);
    let dist = |phi: f64| (point(phi) - target).norm_squared();
    let scan = |lo: f64, hi: f64, k: usize| -> f64 {
        (0..=k)
            .map(|i| lo + (hi - lo) * i as f64 / k as f64)
            .min_by(|a, b| dist(*a).total_cmp(&dist(*b)))
            .expect("nonempty grid")
    };
    let coarse_n = 100_000;
    let step = std::f64::consts::TAU / coarse_n as f64;
    let coarse = scan(0.0, std::f64::consts::TAU, coarse_n);
    let fine = scan(coarse - step, coarse + step, 10_000);
    point(fine)
}

pub fn check_projection(count: usize, seed: u64) -> Result<ProjectionCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };
    let mut worst_point: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    for _ in 0..count {
        let beta = 0.5 + normal().abs();
        let mut est = ConfidenceEllipsoid::new(1, 2, 1.0, 0.1, RadiusRule::Fixed { beta })?;
        for _ in 0..3 {
            let z = Vector::from_vec(vec![normal(), normal()]);
            est.rls_update(&RegressorSample::new(z, Vector::from_vec(vec![normal()])))?;
        }
        let center = est.theta_hat().column(0).into_owned();
        let mut dir = Vector::from_vec(vec![normal(), normal()]);
        dir /= dir.norm();
        let mut target = &center + dir * (1.0 + 2.0 * normal().abs());
        while est.quadratic_form(&Mat::from_column_slice(2, 1, target.as_slice()))? <= beta * 1.01 {
            target = &center + (&target - &center) * 2.0;
        }
        let (got, _) = est
            .projector()
            .project_with_info(&Mat::from_column_slice(2, 1, target.as_slice()), 1e-12)?;
        let got = got.column(0).into_owned();
        let reference = grid_nearest_boundary(est.v(), &center, beta, &target);
        worst_point = worst_point.max((&got - &reference).amax());
        let form = est.quadratic_form(&Mat::from_column_slice(2, 1, got.as_slice()))?;
        worst_residual = worst_residual.max((form - beta).abs() / beta);
    }
    Ok(ProjectionCheck {
        max_point_error: worst_point,
        max_boundary_residual: worst_residual,
    })
}

/// Runs all three oracle suites with the acceptance tolerances.
pub fn run_all() -> Vec<CheckResult> {
    let mut out = Vec::new();
    match check_dare_benchmark() {
        Ok(c) => out.push(CheckResult {
            name: "dare_fixed_point".into(),
            passed: c.residual <= 1e-9 && c.max_gain_diff <= 1e-6 && c.closed_loop_radius < 1.0 && c.seconds < 1.0,
            detail: format!(
                "residual {:.3e}, gain diff {:.3e}, closed-loop radius {:.4}, {:.4} s",
                c.residual, c.max_gain_diff, c.closed_loop_radius, c.seconds
            ),
        }),
        Err(e) => out.push(failed("dare_fixed_point", e)),
    }
    match check_gradient(5, 11, 1e-6) {
        Ok(err) => out.push(CheckResult {
            name: "gradient_finite_difference".into(),
            passed: err <= 1e-4,
            detail: format!("max relative error {err:.3e}"),
        }),
        Err(e) => out.push(failed("gradient_finite_difference", e)),
    }
    match check_projection(50, 13) {
        Ok(c) => out.push(CheckResult {
            name: "projection_grid".into(),
            passed: c.max_point_error <= 1e-3 && c.max_boundary_residual <= 1e-8,
            detail: format!(
                "max point error {:.3e}, boundary residual {:.3e}",
                c.max_point_error, c.max_boundary_residual
            ),
        }),
        Err(e) => out.push(failed("projection_grid", e)),
    }
    out
}

fn failed(name: &str, e: Error) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: false,
        detail: e.to_string(),
    }
}
