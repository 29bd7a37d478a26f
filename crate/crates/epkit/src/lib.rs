//! Analysis of defective non-Hermitian matrices: degeneracy signatures,
//! Kronecker-sum composites, perturbative eigenvalue splitting, and
//! non-unitary time evolution.
//!
//! The core objects are a matrix with a fully degenerate eigenvalue whose
//! traceless part is nilpotent, the signature of that degeneracy (order,
//! geometric multiplicity, block sizes, response strength), and the rules
//! by which those signatures combine under Kronecker sums.

pub mod cli;
pub mod composite;
pub mod dynamics;
pub mod error;
mod fitting;
pub mod io;
pub mod linalg;
pub mod perturbation;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, ToleranceConfig, C64};
pub use spectral::{EPSignature, SpectralExpansion};
