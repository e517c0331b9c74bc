//! Birkhoff normal forms near hyperbolic fixed points.
//!
//! The pipeline runs Williamson normalization of the quadratic part
//! ([`symplectic`]), order-by-order Birkhoff normalization on truncated power
//! series ([`jet`]), numerical flows and hitting times near the saddle
//! ([`flow`]), quadrature solutions of the homological equation
//! ([`homological`]) and the homotopy that removes a flat remainder
//! ([`deformation`]).

pub mod deformation;
pub mod flow;
pub mod homological;
pub mod io;
pub mod jet;
pub mod ode;
pub mod smooth;
pub mod symplectic;

/// Library version, recorded in run reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Any failure of the library, for callers that do not care which stage
/// produced it.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Symplectic(#[from] symplectic::SymplecticError),
    #[error(transparent)]
    Jet(#[from] jet::JetError),
    #[error(transparent)]
    Flow(#[from] flow::FlowError),
    #[error(transparent)]
    Homological(#[from] homological::HomologicalError),
    #[error(transparent)]
    Deformation(#[from] deformation::DeformationError),
    #[error(transparent)]
    Io(#[from] io::IoError),
}

// Chapters of the book are compiled as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/normal-forms.md")]
    mod normal_forms {}
    #[doc = include_str!("../../../book/src/flows.md")]
    mod flows {}
    #[doc = include_str!("../../../book/src/homological.md")]
    mod homological {}
    #[doc = include_str!("../../../book/src/deformation.md")]
    mod deformation {}
}
