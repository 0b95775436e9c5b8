//! Spectral certification of controllability for control-affine quantum
//! systems `i psi' = (H0 + sum_l u_l H_l) psi`.
//!
//! The pipeline locates conical eigenvalue intersections in control space,
//! checks gap distinctness and coupling-graph connectivity at a
//! non-resonant point, computes the Lie closure of `{i H_l}`, and can
//! synthesize and simulate adiabatic control paths that climb the spectrum
//! through the located intersections.

pub mod adiabatic;
pub mod certifier;
pub mod conical;
pub mod error;
pub mod graph;
pub mod lie;
pub mod models;
pub mod operator;
pub mod random;
pub mod resonance;
mod search;
pub mod spectrum;
pub mod tolerances;

pub use conical::{ConicalCertificate, ConicalConfig, ConicalVerdict, ConnectednessReport};
pub use error::{CoreError, Result};
pub use operator::{CMatrix, ControlBox, ControlHamiltonian, ControlPoint, HermitianOperator};
pub use spectrum::SpectralPoint;
pub use tolerances::Tolerances;
