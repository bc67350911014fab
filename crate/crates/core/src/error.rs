use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    /// The feasibility solver failed while certifying the cell reached by `prefix`.
    #[error("numerical failure at pattern prefix {prefix}: {reason}")]
    Numerical { prefix: String, reason: String },
    /// A probe sits within the classification margin of an activation boundary.
    #[error("probe lies on an activation boundary (layer {layer}, neuron {neuron}, margin {margin:e}); re-probe")]
    Boundary { layer: usize, neuron: usize, margin: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
