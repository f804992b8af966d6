use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("Riccati iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("Riccati iterates diverged (|P|_F = {norm:e}); parameter is not stabilizable")]
    NotStabilizable { norm: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("numerical domain error: {0}")]
    NumericalDomain(String),

    #[error("actuator index {index} out of range 1..={d}")]
    IndexOutOfRange { index: usize, d: usize },

    #[error("no admissible parameter found in the confidence set")]
    NoAdmissiblePoint,

    #[error("persistence-of-excitation constants are not positive (c_p = {c_p:e}, c_p'' = {c_pp:e})")]
    InvalidExcitation { c_p: f64, c_pp: f64 },

    #[error("no actuating mode closes its exploration fixed point below the cap {cap}")]
    NoFeasibleMode { cap: u64 },

    #[error("ledger record out of order: t = {t} after {prev}")]
    OutOfOrder { prev: usize, t: usize },

    #[error("simulation diverged at t = {t}: |x| = {norm:e}")]
    SimulationDiverged { t: usize, norm: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn dim_check(
    context: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        })
    }
}
