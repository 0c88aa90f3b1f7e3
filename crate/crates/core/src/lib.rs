//! Husimi-function entropy production for driven-dissipative bosonic modes.
//!
//! Exact numerics for the single-mode Kerr cavity (truncated Fock space,
//! vectorized Lindblad generator, Husimi quadrature) and a Gaussian pipeline
//! for the two-mode Dicke model in the thermodynamic limit.

pub mod banded;
pub mod dicke;
pub mod error;
pub mod fock;
pub mod kerr;
pub mod liouvillian;
pub mod phase_space;
pub mod sparse;

pub use error::{Error, Result};
pub use fock::{DensityMatrix, FockOperator};
pub use liouvillian::{KerrParams, Superoperator};
