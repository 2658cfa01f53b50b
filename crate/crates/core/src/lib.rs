//! Exact analysis toolkit for finite-to-one endomorphisms: subshifts of
//! finite type and circle maps x ↦ Nx mod 1, their strongly invariant
//! measures, transfer operators, solenoid path spaces, and the scaling /
//! harmonic-function diagnostics attached to a quadrature-mirror filter.

pub mod endo;
pub mod error;
pub mod observable;
pub mod ruelle;
pub mod solenoid;
pub mod mra;
pub mod exact;
pub mod linalg;
pub mod measure;

pub use endo::{DynamicalSystem, Point, SftSystem, TorusSystem};
pub use error::{EndoError, Result};
pub use exact::{ExactComplex, RadicalSum, Rat};
