use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field modulus {a_mod:e} is at or below the singular floor")]
    SingularField { a_mod: f64 },

    #[error("phase {phi} outside the open interval (-pi/2, pi/2)")]
    PhaseDomain { phi: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("step size underflow at tau = {tau} (h = {step:e})")]
    StepUnderflow {
        tau: f64,
        step: f64,
        last_state: Vec<f64>,
    },

    #[error("non-finite state at tau = {tau}: {what}")]
    NonFinite { tau: f64, what: String },

    #[error("frequency {freq} Hz outside spectrum range [{lo}, {hi}] Hz")]
    FrequencyOutOfRange { freq: f64, lo: f64, hi: f64 },

    #[error("fractional intensity undefined for a zero-mean signal")]
    ZeroMeanSignal,

    #[error("fit did not converge: {0}")]
    FitFailed(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn ensure(cond: bool, name: &'static str, reason: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(invalid(name, reason))
    }
}
