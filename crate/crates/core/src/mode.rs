//! Actuating modes: a subset of the actuator columns of B together with the
//! side-information constants that bound the behaviour of that subset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Known bounds for one actuating mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideInfo {
    /// Trace-ball radius sⁱ with trace(ΘⁱᵀΘⁱ) ≤ (sⁱ)².
    pub s: f64,
    /// Closed-loop contraction bound Υᵢ < 1 on the admissible set.
    pub upsilon: f64,
    /// ηᵢ ≥ sup ‖A* + Bⁱ* K(Θⁱ)‖ over the admissible set.
    pub eta: f64,
    /// γⁱ ≥ J*(Θⁱ*) − J*(Θ*).
    pub gamma: f64,
    /// ϑᵢ ≥ ‖Bⁱ*‖.
    pub theta_bound: f64,
    /// κⁱ > 1, bound on ‖K(Θⁱ)‖ over the admissible set.
    pub kappa: f64,
    /// Dⁱ ≥ sup ‖P(Θⁱ)‖ over the admissible set.
    pub d_bound: f64,
    /// Bound on ‖B̄ⁱ*‖, the columns of B* not in the mode. Zero for full actuation.
    #[serde(default)]
    pub b_bar_bound: f64,
}

impl SideInfo {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.s,
            self.upsilon,
            self.eta,
            self.gamma,
            self.theta_bound,
            self.kappa,
            self.d_bound,
            self.b_bar_bound,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("side information must be finite".into()));
        }
        if !(self.upsilon > 0.0 && self.upsilon < 1.0) {
            return Err(Error::Config(format!("upsilon must lie in (0,1), got {}", self.upsilon)));
        }
        if self.kappa <= 1.0 {
            return Err(Error::Config(format!("kappa must exceed 1, got {}", self.kappa)));
        }
        if self.s <= 0.0 || self.eta <= 0.0 || self.theta_bound < 0.0 || self.b_bar_bound < 0.0 {
            return Err(Error::Config("side information bounds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuationMode {
    pub id: usize,
    /// 1-based actuator indices, sorted and unique.
    pub actuators: Vec<usize>,
    pub side_info: SideInfo,
}

impl ActuationMode {
    pub fn new(id: usize, mut actuators: Vec<usize>, side_info: SideInfo) -> Result<Self> {
        actuators.sort_unstable();
        actuators.dedup();
        if actuators.is_empty() {
            return Err(Error::Config(format!("mode {id} has no actuators")));
        }
        if actuators[0] == 0 {
            return Err(Error::IndexOutOfRange { index: 0, d: 0 });
        }
        Ok(Self {
            id,
            actuators,
            side_info,
        })
    }

    pub fn d_i(&self) -> usize {
        self.actuators.len()
    }

    pub fn is_full(&self, d: usize) -> bool {
        self.actuators.len() == d
    }

    pub fn check_range(&self, d: usize) -> Result<()> {
        match self.actuators.iter().find(|&&a| a == 0 || a > d) {
            Some(&index) => Err(Error::IndexOutOfRange { index, d }),
            None => Ok(()),
        }
    }

    /// 0-based column indices into B.
    pub fn columns(&self) -> Vec<usize> {
        self.actuators.iter().map(|a| a - 1).collect()
    }

    /// 0-based indices of the actuators not in this mode.
    pub fn complement(&self, d: usize) -> Vec<usize> {
        (0..d).filter(|j| !self.actuators.contains(&(j + 1))).collect()
    }

    pub fn select_b(&self, b: &Mat) -> Result<Mat> {
        self.check_range(b.ncols())?;
        Ok(b.select_columns(&self.columns()))
    }

    pub fn select_b_bar(&self, b: &Mat) -> Result<Mat> {
        self.check_range(b.ncols())?;
        Ok(b.select_columns(&self.complement(b.ncols())))
    }

    pub fn select_r(&self, r: &Mat) -> Result<Mat> {
        self.check_range(r.ncols())?;
        let cols = self.columns();
        Ok(r.select_rows(&cols).select_columns(&cols))
    }

    pub fn label(&self) -> String {
        let parts: Vec<String> = self.actuators.iter().map(|a| a.to_string()).collect();
        format!("{{{}}}", parts.join(","))
    }
}

/// All nonempty actuator subsets of {1..d}. The full set gets id 1; the rest
/// follow in order of size, then lexicographically.
pub fn enumerate_subsets(d: usize) -> Vec<Vec<usize>> {
    let mut subsets: Vec<Vec<usize>> = (1u64..(1u64 << d))
        .map(|mask| (0..d).filter(|j| mask & (1 << j) != 0).map(|j| j + 1).collect())
        .collect();
    subsets.sort_by(|a: &Vec<usize>, b: &Vec<usize>| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    subsets
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn info() -> SideInfo {
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
    fn subsets_full_first() {
        let s = enumerate_subsets(3);
        assert_eq!(s.len(), 7);
        assert_eq!(s[0], vec![1, 2, 3]);
        assert_eq!(s[1], vec![1, 2]);
        assert_eq!(s[6], vec![3]);
    }

    #[test]
    fn selection() {
        let m = ActuationMode::new(2, vec![3, 1], info()).unwrap();
        assert_eq!(m.actuators, vec![1, 3]);
        let b = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.select_b(&b).unwrap(), Mat::from_row_slice(2, 2, &[1.0, 3.0, 4.0, 6.0]));
        assert_eq!(m.select_b_bar(&b).unwrap(), Mat::from_row_slice(2, 1, &[2.0, 5.0]));
        let r = Mat::from_row_slice(3, 3, &[1.0, 0.1, 0.2, 0.1, 2.0, 0.3, 0.2, 0.3, 3.0]);
        assert_eq!(m.select_r(&r).unwrap(), Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]));
        assert_eq!(m.label(), "{1,3}");
    }

    #[test]
    fn range_and_validation() {
        let m = ActuationMode::new(1, vec![4], info()).unwrap();
        assert!(matches!(m.check_range(3), Err(Error::IndexOutOfRange { index: 4, d: 3 })));
        assert!(ActuationMode::new(1, vec![], info()).is_err());
        let mut bad = info();
        bad.upsilon = 1.0;
        assert!(bad.validate().is_err());
        bad = info();
        bad.kappa = 1.0;
        assert!(bad.validate().is_err());
        assert!(info().validate().is_ok());
    }
}
