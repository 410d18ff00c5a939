use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("degenerate channel: {0}")]
    Degenerate(String),

    #[error("{op} is not supported for the {spectrum} spectrum")]
    Unsupported { op: &'static str, spectrum: String },

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("outlier root not bracketed on ({lo}, {hi}]")]
    SearchFailure { lo: f64, hi: f64 },

    #[error("signal measure has total mass {mass}, expected 1")]
    Consistency { mass: f64 },

    #[error("fixed-point iteration did not converge in {iterations} steps (last step {last_step:e})")]
    NonConvergence { iterations: usize, last_step: f64 },

    #[error("conjugate gradients did not converge in {iterations} steps (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("dense noise with N = {n} exceeds the limit {limit}")]
    DenseTooLarge { n: usize, limit: usize },

    #[error("non-finite value at iteration {t}: {what}")]
    NonFinite { t: usize, what: &'static str },

    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_omega(omega: f64) -> Result<()> {
    if (0.0..=1.0).contains(&omega) {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "omega",
            value: omega,
            domain: "[0, 1]",
        })
    }
}
