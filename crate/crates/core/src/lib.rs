//! Cubic- and gradient-regularized SR1 proximal quasi-Newton methods.
//!
//! The crate provides dense symmetric linear algebra ([`linalg`]), the SR1
//! metric update ([`sr1`]), benchmark objectives ([`problems`]), exact model
//! subproblem solvers ([`subproblem`]), the methods and their baselines
//! ([`solvers`]) and the non-asymptotic rate certificates ([`certify`]).

pub mod certify;
pub mod error;
pub mod linalg;
pub mod problems;
pub mod solvers;
pub mod sr1;
pub mod subproblem;

pub use error::{Error, Result};
pub use linalg::{SymMatrix, Vector};
