//! Ensemble solver for 2D laminar natural convection.
//!
//! The solver advances J ensemble members of a Boussinesq natural-convection
//! problem with linearly implicit timestepping in which the implicit
//! convection uses the ensemble-mean velocity. The per-step coefficient
//! matrices are therefore shared by all members: each step factorizes one
//! velocity saddle-point system and one temperature system, then solves both
//! against J right-hand sides. Spatial discretization is Taylor-Hood
//! (P2 velocity, P1 pressure) with P2 temperature on structured triangle
//! meshes, with explicitly skew-symmetrized convection forms.

pub mod assembly;
pub mod config;
pub mod diagnostics;
pub mod elements;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod linsolve;
pub mod mesh;
pub mod mms;
pub mod perturb;
pub mod vtk;

pub use error::{Error, Result};
