//! Riccati numerics for a candidate parameter Θ = (A B)ᵀ.
//!
//! The parameter is stored in the stacked layout used throughout the crate:
//! `theta` is (n+d)×n, with Aᵀ in the top n rows and Bᵀ in the bottom d rows,
//! so that x_{t+1} = Θᵀ (x_t; u_t).

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParam {
    theta: Mat,
    n: usize,
}

impl SystemParam {
    pub fn new(theta: Mat, n: usize) -> Result<Self> {
        if theta.ncols() != n || theta.nrows() < n {
            return Err(Error::DimensionMismatch {
                context: "SystemParam",
                expected: format!("(n+d)x{n}"),
                found: format!("{}x{}", theta.nrows(), theta.ncols()),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalDomain("non-finite parameter entry".into()));
        }
        Ok(Self { theta, n })
    }

    pub fn from_ab(a: &Mat, b: &Mat) -> Result<Self> {
        let n = a.nrows();
        dim_check("SystemParam::from_ab (A)", (n, n), a.shape())?;
        dim_check("SystemParam::from_ab (B)", (n, b.ncols()), b.shape())?;
        let d = b.ncols();
        let mut theta = Mat::zeros(n + d, n);
        theta.rows_mut(0, n).copy_from(&a.transpose());
        theta.rows_mut(n, d).copy_from(&b.transpose());
        Self::new(theta, n)
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            theta: Mat::zeros(n + d, n),
            n,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.theta.nrows() - self.n
    }

    pub fn theta(&self) -> &Mat {
        &self.theta
    }

    pub fn into_theta(self) -> Mat {
        self.theta
    }

    pub fn a(&self) -> Mat {
        self.theta.rows(0, self.n).transpose()
    }

    pub fn b(&self) -> Mat {
        self.theta.rows(self.n, self.d()).transpose()
    }

    /// trace(ΘᵀΘ), the squared Frobenius norm.
    pub fn trace_norm_sq(&self) -> f64 {
        self.theta.norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DareMethod {
    /// Plain value iteration P ← (1-ω)P + ω·Ric(P).
    FixedPoint,
    /// Structure-preserving doubling, polished by fixed-point steps.
    Doubling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DareOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: DareMethod,
    /// Relaxation weight ω ∈ (0, 1] for the fixed-point update.
    pub damping: f64,
    pub divergence_cap: f64,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            method: DareMethod::Doubling,
            damping: 1.0,
            divergence_cap: 1e12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p: Mat,
    pub k: Mat,
    /// Average expected cost σ̄²·trace(P).
    pub j: f64,
    pub residual: f64,
    pub iterations: usize,
}

impl RiccatiSolution {
    pub fn closed_loop(&self, theta: &SystemParam) -> Mat {
        theta.a() + theta.b() * &self.k
    }
}

struct RiccatiMap<'a> {
    a: Mat,
    b: Mat,
    q: &'a Mat,
    r: &'a Mat,
}

impl RiccatiMap<'_> {
    fn gain_factor(&self, p: &Mat) -> Option<Cholesky<f64, nalgebra::Dyn>> {
        let s = self.b.transpose() * p * &self.b + self.r;
        linalg::symmetrize(&s).cholesky()
    }

    /// Ric(P) = Q + AᵀPA − AᵀPB(BᵀPB+R)⁻¹BᵀPA
    fn apply(&self, p: &Mat) -> Result<Mat> {
        let atpa = self.a.transpose() * p * &self.a;
        if self.b.ncols() == 0 {
            return Ok(linalg::symmetrize(&(self.q + atpa)));
        }
        let chol = self
            .gain_factor(p)
            .ok_or_else(|| Error::NumericalDomain("BᵀPB+R is not positive definite".into()))?;
        let btpa = self.b.transpose() * p * &self.a;
        let correction = btpa.transpose() * chol.solve(&btpa);
        Ok(linalg::symmetrize(&(self.q + atpa - correction)))
    }

    fn gain(&self, p: &Mat) -> Result<Mat> {
        let d = self.b.ncols();
        let n = self.a.nrows();
        if d == 0 {
            return Ok(Mat::zeros(0, n));
        }
        let chol = self
            .gain_factor(p)
            .ok_or_else(|| Error::NumericalDomain("BᵀPB+R is not positive definite".into()))?;
        Ok(-chol.solve(&(self.b.transpose() * p * &self.a)))
    }
}

fn check_pd(m: &Mat, what: &'static str) -> Result<()> {
    if m.nrows() > 0 && linalg::symmetrize(m).cholesky().is_none() {
        return Err(Error::NumericalDomain(format!("{what} is not positive definite")));
    }
    Ok(())
}

/// Solves the discrete algebraic Riccati equation at `theta`.
///
/// `noise_var` is σ̄_ω², used only to report J = σ̄_ω²·trace(P).
pub fn solve_dare(
    theta: &SystemParam,
    q: &Mat,
    r: &Mat,
    noise_var: f64,
    opts: &DareOptions,
) -> Result<RiccatiSolution> {
    let n = theta.n();
    let d = theta.d();
    dim_check("solve_dare (Q)", (n, n), q.shape())?;
    dim_check("solve_dare (R)", (d, d), r.shape())?;
    check_pd(q, "Q")?;
    check_pd(r, "R")?;

    let map = RiccatiMap {
        a: theta.a(),
        b: theta.b(),
        q,
        r,
    };

    let (mut p, mut iterations) = match opts.method {
        DareMethod::Doubling => match doubling(&map, opts)? {
            Some(found) => found,
            None => (q.clone(), 0),
        },
        DareMethod::FixedPoint => (q.clone(), 0),
    };

    // Fixed-point phase: either the whole solve or a polish after doubling.
    let omega = opts.damping.clamp(f64::MIN_POSITIVE, 1.0);
    let mut next = map.apply(&p)?;
    let mut residual = (&next - &p).norm();
    while residual > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                residual,
                iterations,
            });
        }
        p = if omega == 1.0 {
            next
        } else {
            &p * (1.0 - omega) + next * omega
        };
        let norm = p.norm();
        if !norm.is_finite() || norm > opts.divergence_cap {
            return Err(Error::NotStabilizable { norm });
        }
        next = map.apply(&p)?;
        residual = (&next - &p).norm();
        iterations += 1;
    }

    let k = map.gain(&p)?;
    let j = noise_var * p.trace();
    Ok(RiccatiSolution {
        p,
        k,
        j,
        residual,
        iterations,
    })
}

/// Structure-preserving doubling: A₀ = A, G₀ = BR⁻¹Bᵀ, H₀ = Q, then
/// W = I + G H,  A' = A W⁻¹ A,  G' = G + A W⁻¹ G Aᵀ,  H' = H + Aᵀ H W⁻¹ A.
/// H converges quadratically to P. Returns `None` when W becomes singular so
/// the caller can fall back to plain iteration.
fn doubling(map: &RiccatiMap<'_>, opts: &DareOptions) -> Result<Option<(Mat, usize)>> {
    let n = map.a.nrows();
    let eye = Mat::identity(n, n);
    let mut a = map.a.clone();
    let mut g = if map.b.ncols() == 0 {
        Mat::zeros(n, n)
    } else {
        let r_chol = linalg::symmetrize(map.r)
            .cholesky()
            .ok_or_else(|| Error::NumericalDomain("R is not positive definite".into()))?;
        &map.b * r_chol.solve(&map.b.transpose())
    };
    let mut h = map.q.clone();

    for it in 1..=opts.max_iter.min(200) {
        let w = &eye + &g * &h;
        let lu = w.lu();
        let (Some(w_inv_a), Some(w_inv_g)) = (lu.solve(&a), lu.solve(&g)) else {
            return Ok(None);
        };
        let h_next = linalg::symmetrize(&(&h + a.transpose() * &h * &w_inv_a));
        let g_next = linalg::symmetrize(&(&g + &a * &w_inv_g * a.transpose()));
        let a_next = &a * &w_inv_a;

        let norm = h_next.norm();
        if !norm.is_finite() || norm > opts.divergence_cap {
            return Err(Error::NotStabilizable { norm });
        }
        let step = (&h_next - &h).norm();
        h = h_next;
        g = g_next;
        a = a_next;
        if step <= opts.tol * 1e-3 * (1.0 + norm) || a.norm() < 1e-300 {
            return Ok(Some((h, it)));
        }
    }
    Ok(Some((h, opts.max_iter.min(200))))
}

/// Rank test on [B, AB, …, A^{n−1}B]: singular values above `tol·σ_max` count.
pub fn check_controllable(theta: &SystemParam, tol: f64) -> bool {
    controllable_pair(&theta.a(), &theta.b(), tol)
}

fn controllable_pair(a: &Mat, b: &Mat, tol: f64) -> bool {
    let n = a.nrows();
    let d = b.ncols();
    if n == 0 {
        return true;
    }
    if d == 0 {
        return false;
    }
    let mut ctrb = Mat::zeros(n, n * d);
    let mut block = b.clone();
    for k in 0..n {
        ctrb.columns_mut(k * d, d).copy_from(&block);
        block = a * block;
    }
    if ctrb.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let sv = ctrb.singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return false;
    }
    sv.iter().filter(|&&s| s > tol * smax).count() == n
}

/// Observability of (A, M) with Q = MᵀM, via duality with controllability.
pub fn check_observable(a: &Mat, q: &Mat, tol: f64) -> bool {
    let eig = linalg::symmetrize(q).symmetric_eigen();
    let sqrt_diag = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let m = Mat::from_diagonal(&sqrt_diag) * eig.eigenvectors.transpose();
    controllable_pair(&a.transpose(), &m.transpose(), tol)
}

/// Gradient of `scale·trace(P(Θ))` with respect to the stacked Θ.
///
/// At the Riccati fixed point the optimal gain is stationary, so dP solves
/// dP = Lᵀ dP L + (dA + dB K)ᵀ P L + Lᵀ P (dA + dB K) with L = A + BK.
/// Pairing with the adjoint Σ = L Σ Lᵀ + I gives
/// ∂trP/∂A = 2 P L Σ and ∂trP/∂B = 2 P L Σ Kᵀ.
pub fn grad_trace_p(
    theta: &SystemParam,
    q: &Mat,
    r: &Mat,
    scale: f64,
    opts: &DareOptions,
) -> Result<Mat> {
    if scale == 0.0 {
        return Ok(Mat::zeros(theta.theta().nrows(), theta.n()));
    }
    let sol = solve_dare(theta, q, r, 1.0, opts)?;
    grad_from_solution(theta, &sol, scale)
}

pub(crate) fn grad_from_solution(theta: &SystemParam, sol: &RiccatiSolution, scale: f64) -> Result<Mat> {
    let n = theta.n();
    let d = theta.d();
    let l = sol.closed_loop(theta);
    let sigma = linalg::solve_discrete_lyapunov(&l, &Mat::identity(n, n))?;
    let grad_a = (&sol.p * &l * &sigma) * 2.0;
    let mut grad = Mat::zeros(n + d, n);
    grad.rows_mut(0, n).copy_from(&grad_a.transpose());
    if d > 0 {
        grad.rows_mut(n, d).copy_from(&(&sol.k * grad_a.transpose()));
    }
    Ok(grad * scale)
}
