//! Groundwater travel times through heterogeneous porous media.
//!
//! The crate discretises Darcy's equations with a mixed finite element method
//! (BDM velocity, discontinuous pressure), traces particle trajectories of the
//! transport velocity, differentiates the travel time functional through a
//! backward-in-time adjoint trajectory with interface jump conditions, and uses
//! that derivative to drive dual-weighted-residual error estimation and
//! adaptive red-green mesh refinement.

pub mod adjoint;
pub mod cli;
pub mod dwr;
pub mod expm;
pub mod fem;
pub mod io;
pub mod mesh;
pub mod ode;
pub mod problems;
pub mod quadrature;
pub mod tracer;

pub use nalgebra::{Matrix2, Vector2};

/// Points and vectors in the plane share one representation.
pub type Point = Vector2<f64>;
