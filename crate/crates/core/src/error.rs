use thiserror::Error;

/// Errors raised by the q-umbral engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dilation parameter q = {0}: must be finite, positive and different from 1")]
    InvalidQ(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("incompatible operator shapes: {left} vs {right}")]
    IncompatibleOrders { left: String, right: String },

    #[error("x = {x} lies outside the convergence radius {radius}")]
    OutsideRadius { x: f64, radius: f64 },

    #[error("series did not converge at x = {0}")]
    NotConverged(f64),

    #[error("operation `{0}` is not supported for this function kind")]
    Unsupported(&'static str),

    #[error("degenerate interior: {0}")]
    DegenerateInterior(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
