use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("field is in {found} space, expected {expected} space")]
    WrongSpace {
        expected: &'static str,
        found: &'static str,
    },

    #[error("slice [{z_lo:.6e}, {z_hi:.6e}] m crosses the region boundary at z = {boundary:.6e} m")]
    StraddlesBoundary { z_lo: f64, z_hi: f64, boundary: f64 },

    #[error("translation step too large: displacement of {max_pixels:.3} px exceeds one pixel; use more fringe slices")]
    StepTooLarge { max_pixels: f64 },

    #[error("sampling limit exceeded ({criterion}): worst inter-pixel phase step {phase_step:.3} rad exceeds pi; use more slices or a finer grid")]
    SamplingViolation {
        criterion: &'static str,
        phase_step: f64,
    },

    #[error("beam waist {waist:.3e} m is under-resolved on a {n}-point grid over {extent:.3e} m; need at least {required_n} points")]
    UnderResolved {
        waist: f64,
        extent: f64,
        n: usize,
        required_n: usize,
    },

    #[error("no rays reached the exit plane inside the grid")]
    AllRaysLost,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {value}")))
    }
}
