//! Side information estimated from the true plant: the suprema over a
//! Frobenius ball around each mode's true parameter are approximated by
//! sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::control::{solve_dare, DareOptions, SystemParam};
use crate::error::Result;
use crate::linalg::{spectral_norm, Mat};
use crate::mode::SideInfo;
use crate::simulator::PlantTruth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    /// Frobenius radius of the sampled neighborhood around Θ*ⁱ.
    pub radius: f64,
    pub samples: usize,
    /// Υᵢ = ‖L*ⁱ‖ + margin·(1 − ‖L*ⁱ‖).
    pub upsilon_margin: f64,
    /// Lower bound applied to κᵢ, which must exceed one.
    pub kappa_floor: f64,
    pub seed: u64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            radius: 0.2,
            samples: 2000,
            upsilon_margin: 0.5,
            kappa_floor: 1.01,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCalibration {
    pub actuators: Vec<usize>,
    /// ‖A* + B*ⁱK(Θ*ⁱ)‖, NaN when the DARE has no solution.
    pub closed_loop_norm: f64,
    pub admissible_samples: usize,
    /// `None` when the mode cannot satisfy Υᵢ < 1.
    pub side_info: Option<SideInfo>,
    pub note: Option<String>,
}

fn select_columns(m: &Mat, actuators: &[usize]) -> Mat {
    let cols: Vec<usize> = actuators.iter().map(|a| a - 1).collect();
    m.select_columns(cols.iter())
}

fn complement(d: usize, actuators: &[usize]) -> Vec<usize> {
    (1..=d).filter(|a| !actuators.contains(a)).collect()
}

/// Calibrates one mode. `j_star` is the full-actuation optimal average cost
/// and `noise_var` the σ̄_ω² it was computed with.
pub fn calibrate_mode(
    plant: &PlantTruth,
    actuators: &[usize],
    settings: &CalibrationSettings,
    j_star: f64,
    noise_var: f64,
    opts: &DareOptions,
) -> Result<ModeCalibration> {
    let n = plant.n();
    let d = plant.d();
    let b_i = select_columns(&plant.b, actuators);
    let r_i = plant.r.select_rows(actuators.iter().map(|a| a - 1).collect::<Vec<_>>().iter());
    let r_i = select_columns(&r_i, actuators);
    let truth = SystemParam::from_ab(&plant.a, &b_i)?;
    let closed = |sol_k: &Mat, a: &Mat, b: &Mat| spectral_norm(&(a + b * sol_k));

    let unusable = |norm: f64, note: String| ModeCalibration {
        actuators: actuators.to_vec(),
        closed_loop_norm: norm,
        admissible_samples: 0,
        side_info: None,
        note: Some(note),
    };
    let at_truth = match solve_dare(&truth, &plant.q, &r_i, noise_var, opts) {
        Ok(sol) => sol,
        Err(e) => return Ok(unusable(f64::NAN, format!("no Riccati solution at the true parameter: {e}"))),
    };
    let l_star = closed(&at_truth.k, &plant.a, &b_i);
    if l_star >= 1.0 {
        return Ok(unusable(l_star, format!("closed-loop norm {l_star:.4} is not below one")));
    }
    let upsilon = l_star + settings.upsilon_margin * (1.0 - l_star);

    let dim = (n + actuators.len()) * n;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let unit = Uniform::new(0.0f64, 1.0).expect("valid range");
    let mut eta = l_star;
    let mut kappa = spectral_norm(&at_truth.k);
    let mut d_bound = spectral_norm(&at_truth.p);
    let mut admissible = 1;
    for _ in 0..settings.samples {
        let dir = Mat::from_fn(n + actuators.len(), n, |_, _| StandardNormal.sample(&mut rng));
        let scale = settings.radius * unit.sample(&mut rng).powf(1.0 / dim as f64) / dir.norm();
        let theta = SystemParam::new(truth.theta() + dir * scale, n)?;
        let Ok(sol) = solve_dare(&theta, &plant.q, &r_i, noise_var, opts) else {
            continue;
        };
        if sol.closed_loop(&theta).iter().any(|v| !v.is_finite()) {
            continue;
        }
        if spectral_norm(&sol.closed_loop(&theta)) > upsilon {
            continue;
        }
        admissible += 1;
        eta = eta.max(closed(&sol.k, &plant.a, &b_i));
        kappa = kappa.max(spectral_norm(&sol.k));
        d_bound = d_bound.max(spectral_norm(&sol.p));
    }
    let gamma = (at_truth.j - j_star).max(0.0);
    let b_bar = select_columns(&plant.b, &complement(d, actuators));
    let side_info = SideInfo {
        s: truth.theta().norm() + settings.radius,
        upsilon,
        eta,
        gamma,
        theta_bound: spectral_norm(&b_i),
        kappa: kappa.max(settings.kappa_floor),
        d_bound,
        b_bar_bound: if b_bar.ncols() == 0 { 0.0 } else { spectral_norm(&b_bar) },
    };
    Ok(ModeCalibration {
        actuators: actuators.to_vec(),
        closed_loop_norm: l_star,
        admissible_samples: admissible,
        side_info: Some(side_info),
        note: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::optimal_avg_cost;

    fn plant() -> PlantTruth {
        PlantTruth::new(
            Mat::from_row_slice(2, 2, &[0.9, 0.2, 0.0, 0.8]),
            Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn full_mode_has_no_gap_and_contains_truth() {
        let p = plant();
        let opts = DareOptions::default();
        let j = optimal_avg_cost(&p, 0.1, &opts).unwrap();
        let cal = calibrate_mode(&p, &[1, 2], &CalibrationSettings::default(), j, 0.01, &opts).unwrap();
        let info = cal.side_info.unwrap();
        assert!(info.validate().is_ok());
        assert!(info.gamma.abs() < 1e-12);
        assert_eq!(info.b_bar_bound, 0.0);
        assert!(info.s >= p.theta().theta().norm());
        assert!(info.eta >= cal.closed_loop_norm);
        assert!(cal.admissible_samples > 1);
    }

    #[test]
    fn reduced_mode_costs_more() {
        let p = plant();
        let opts = DareOptions::default();
        let j = optimal_avg_cost(&p, 0.1, &opts).unwrap();
        let cal = calibrate_mode(&p, &[1], &CalibrationSettings::default(), j, 0.01, &opts).unwrap();
        let info = cal.side_info.unwrap();
        assert!(info.gamma > 0.0);
        assert!((info.b_bar_bound - 1.0).abs() < 1e-12);
        assert!((info.theta_bound - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unstabilizable_mode_is_dropped() {
        let p = PlantTruth::new(
            Mat::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 1.5]),
            Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
        )
        .unwrap();
        let opts = DareOptions::default();
        let j = optimal_avg_cost(&p, 0.1, &opts).unwrap();
        let cal = calibrate_mode(&p, &[1], &CalibrationSettings::default(), j, 0.01, &opts).unwrap();
        assert!(cal.side_info.is_none());
        assert!(cal.note.is_some());
    }
}
