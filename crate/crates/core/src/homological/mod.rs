//! Solving `H_p f = g` for flat `g` by integrating along the flow of `p`.

mod cutoff;
mod flat;
mod quad;
mod solve;

pub use cutoff::{make_partition, CutoffPair};
pub use flat::{FlatCertificate, FlatFunction, SlopeReport};
pub use quad::{gk15, AdaptiveQuad};
pub use solve::{
    residual_check, HomologicalOptions, HomologicalSolver, HomologicalValue, ResidualReport,
    ResidualRow,
};

use crate::flow::FlowError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HomologicalError {
    #[error(
        "decay margin too small: N_flat = {n_flat}, lambda_1 = {lambda_1}, slack = {slack}"
    )]
    DecayMarginTooSmall {
        n_flat: u32,
        lambda_1: f64,
        slack: f64,
    },
    #[error("f is undefined at the origin")]
    OriginUndefined,
    #[error("point with |rho|_0 = {norm} lies outside the ball of radius {delta}")]
    OutsideRegion { norm: f64, delta: f64 },
    #[error("{direction} integral did not terminate within horizon {horizon}")]
    NoTermination {
        direction: &'static str,
        horizon: f64,
    },
    #[error("cutoff profile order must be at least 1")]
    InvalidProfile,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Flow(#[from] FlowError),
}
