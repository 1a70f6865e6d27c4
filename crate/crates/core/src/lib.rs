//! Discretization, linear solver and damped Picard iteration for the
//! Dirichlet prescribed-mean-curvature problem
//! `div(∇u/√(1+|∇u|²)) = H(x, u, ∇u)`.

pub mod elliptic;
pub mod error;
pub mod fixed_point;
pub mod geometry;
pub mod grid;
pub mod norms;
pub mod prescription;
pub mod sparse;

pub use error::{PmcError, Result};
pub use grid::{Domain, DomainSpec, GridField, Shape};
