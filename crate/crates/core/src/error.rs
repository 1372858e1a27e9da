use thiserror::Error;

use crate::sdp::SdpStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("activation coefficient list is empty")]
    EmptyCoefficients,

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("relaxation order k={k} is below the minimum order k0={k0}")]
    OrderTooLow { k: usize, k0: usize },

    #[error("minimizer extraction needs a flat rank-1 moment matrix (rank {rank} found)")]
    ExtractionUnsupported { rank: usize },

    #[error("SDP solver reported {status:?} at relaxation order {order}: {message}")]
    Solver {
        order: usize,
        status: SdpStatus,
        message: String,
    },

    #[error("parse error in {source_name}: {message}")]
    Parse { source_name: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
