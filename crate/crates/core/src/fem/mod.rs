//! Mixed finite element discretisation of Darcy's equations
//!
//! ```text
//!   K⁻¹u + ∇p = 0,  ∇·u = f   in Ω,
//!   p = g_D on ∂Ω_D,   u·n = 0 on ∂Ω_N,
//! ```
//!
//! in the saddle-point form `a(u,v) + b(v,p) = G(v)`, `b(u,q) = F(q)` with
//! `a(u,v) = ∫K⁻¹u·v`, `b(v,p) = -∫p∇·v`, `G(v) = -⟨v·n, g_D⟩`, `F(q) = -∫fq`.
//! No-flow faces are removed from the unknowns; Dirichlet data only enters
//! the right-hand side.

mod problem;
mod solution;
mod space;
mod system;

use std::sync::Arc;

use thiserror::Error;

pub use problem::{Material, ProblemSpec, ScalarField};
pub use solution::MixedSolution;
pub use space::{monomial_exponents, LocalBasis, MixedSpace, MAX_ORDER};
pub use system::{assemble, solve, CscMatrix, SaddleSystem};
pub(crate) use system::{face_rule, volume_rule};

use crate::mesh::Mesh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("unsupported order {0} (supported: 0..={max})", max = MAX_ORDER)]
    UnsupportedOrder(usize),
    #[error("mesh region {0} has no material data")]
    MissingMaterial(usize),
    #[error("invalid material in region {region}: {reason}")]
    InvalidMaterial { region: usize, reason: String },
    #[error("element {0} is degenerate: local basis matrix is singular")]
    DegenerateElement(usize),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("point ({x}, {y}) is outside element {element}")]
    OutsideElement { element: usize, x: f64, y: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Builds the space `V_{h,k} × Π_{h,k}` on a mesh.
pub fn build_space(mesh: Arc<Mesh>, order: usize) -> Result<Arc<MixedSpace>, FemError> {
    MixedSpace::new(mesh, order).map(Arc::new)
}
