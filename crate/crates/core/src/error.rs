use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("target impedance is not admissible: {0}")]
    InadmissibleTarget(String),

    #[error("singular evaluation at {omega} rad/s: {what}")]
    SingularFrequency { omega: f64, what: &'static str },

    #[error("identification failed: {0}")]
    Identification(String),

    #[error("discretization failed: {0}")]
    Discretization(String),

    #[error("frequency {freq_hz} Hz is above the plane-wave limit of {limit_hz:.1} Hz")]
    AbovePlaneWaveLimit { freq_hz: f64, limit_hz: f64 },

    #[error("closed-loop simulation diverged at t = {time_s} s")]
    Divergence { time_s: f64 },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures caused by the numerics (singularities, divergence)
    /// rather than by bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign(_)
                | Error::SingularFrequency { .. }
                | Error::Identification(_)
                | Error::Discretization(_)
                | Error::Divergence { .. }
                | Error::RootFinding(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Checks that `value` is finite and strictly positive.
pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {value}")))
    }
}
