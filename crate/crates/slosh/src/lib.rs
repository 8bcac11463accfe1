//! Finite element solver for linearized fluid sloshing with surface
//! tension.
//!
//! The library discretizes the coupled eigenvalue problem for the velocity
//! potential and the free surface height of an ideal fluid in a
//! vertical-walled container, solves it through two independent
//! formulations, and machine-checks the identities the solution must
//! satisfy (energy equidistribution, cross orthogonality, domain
//! monotonicity, the zero-surface-tension limit and its first-order Bond
//! number correction) against closed-form cylinder and box oracles.

// `!(x > 0.0)` guards deliberately catch NaN alongside nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod assembly;
pub mod cholesky;
pub mod cli;
pub mod eigensolve;
pub mod error;
pub mod geometry;
pub mod io;
pub mod perturbation;
pub mod sparse;
pub mod util;
pub mod verify;

pub use assembly::{assemble, Bond, OperatorSet};
pub use eigensolve::{
    neumann_solve, solve_coupled, solve_reduced, SloshingMode, SolveContext, Spectrum,
};
pub use error::{Result, SloshError};
pub use geometry::{extrude, mesh_surface, refine, ContainerShape, ContainerSpec, MeshPair};
