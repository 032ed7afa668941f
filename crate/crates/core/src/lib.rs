//! Desk-scale simulator for the damped Cahn-Hilliard-Navier-Stokes system
//! (convective Brinkman-Forchheimer flow coupled to a Cahn-Hilliard phase
//! field) on the unit square or cube.
//!
//! The crate is organised bottom-up:
//!
//! - [`materials`]: double-well potentials, mobilities, their regularizations
//!   and the entropy function `G`.
//! - [`grid`] and [`operators`]: the staggered (MAC) grid, its stencils, the
//!   Helmholtz projection, the skew trilinear form and the inverse Neumann
//!   Laplacian behind the `H^-1`-type norm.
//! - [`solver`]: the convex-splitting, semi-implicit time stepper.
//! - [`diagnostics`]: energies, dissipation rates and energy-balance residuals.
//! - [`experiments`]: refinement, exponent, uniqueness and regularization studies.
//! - [`output`]: CSV rows, binary field dumps and SVG charts.

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod init;
pub mod krylov;
pub mod materials;
pub mod operators;
pub mod output;
pub mod simulation;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Grid, ScalarField, VectorField};
pub use materials::{EntropyFunction, MobilitySpec, PotentialSpec};
pub use simulation::{Simulation, SimulationSetup};
pub use solver::{SolverParams, State};
