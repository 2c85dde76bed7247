use std::sync::Arc;

use super::{FemError, MixedSpace};
use crate::mesh::Mesh;
use crate::{Matrix2, Point, Vector2};

/// Velocity and pressure coefficients on a [`MixedSpace`].
#[derive(Clone, Debug)]
pub struct MixedSolution {
    pub space: Arc<MixedSpace>,
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl MixedSolution {
    pub fn new(space: Arc<MixedSpace>, velocity: Vec<f64>, pressure: Vec<f64>) -> Self {
        assert_eq!(velocity.len(), space.n_velocity());
        assert_eq!(pressure.len(), space.n_pressure());
        Self {
            space,
            velocity,
            pressure,
        }
    }

    pub fn zeros(space: Arc<MixedSpace>) -> Self {
        let (nv, np) = (space.n_velocity(), space.n_pressure());
        Self::new(space, vec![0.0; nv], vec![0.0; np])
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.space.mesh()
    }

    fn check_inside(&self, e: usize, x: &Point) -> Result<(), FemError> {
        // relative tolerance on barycentric coordinates
        if self.mesh().barycentric(e, x).iter().all(|&l| l >= -1e-9) {
            Ok(())
        } else {
            Err(FemError::OutsideElement {
                element: e,
                x: x.x,
                y: x.y,
            })
        }
    }

    /// `u_h|κ(x)` for `x` in the closed element.
    pub fn evaluate_velocity(&self, e: usize, x: &Point) -> Result<Vector2<f64>, FemError> {
        self.check_inside(e, x)?;
        Ok(self.velocity_polynomial(e, x))
    }

    /// `∇u_h|κ(x)` with rows = velocity components, columns = derivatives.
    pub fn velocity_gradient(&self, e: usize, x: &Point) -> Result<Matrix2<f64>, FemError> {
        self.check_inside(e, x)?;
        Ok(self.velocity_polynomial_gradient(e, x))
    }

    /// Evaluates element `e`'s polynomial anywhere (no inclusion check).
    pub fn velocity_polynomial(&self, e: usize, x: &Point) -> Vector2<f64> {
        let dofs = self.space.velocity_dofs(e);
        self.space
            .velocity_basis(e, x)
            .iter()
            .zip(dofs)
            .fold(Vector2::zeros(), |acc, (phi, d)| acc + phi * self.velocity[d])
    }

    pub fn velocity_polynomial_gradient(&self, e: usize, x: &Point) -> Matrix2<f64> {
        let dofs = self.space.velocity_dofs(e);
        self.space
            .velocity_basis_gradients(e, x)
            .iter()
            .zip(dofs)
            .fold(Matrix2::zeros(), |acc, (g, d)| acc + g * self.velocity[d])
    }

    pub fn divergence(&self, e: usize, x: &Point) -> f64 {
        self.velocity_polynomial_gradient(e, x).trace()
    }

    pub fn pressure_at(&self, e: usize, x: &Point) -> f64 {
        let range = self.space.pressure_dofs(e);
        self.space
            .pressure_basis(e, x)
            .iter()
            .zip(&self.pressure[range])
            .map(|(b, c)| b * c)
            .sum()
    }

    pub fn pressure_gradient(&self, e: usize, x: &Point) -> Vector2<f64> {
        let range = self.space.pressure_dofs(e);
        self.space
            .pressure_basis_gradients(e, x)
            .iter()
            .zip(&self.pressure[range])
            .fold(Vector2::zeros(), |acc, (g, c)| acc + g * *c)
    }

    /// Coefficients of `u_h|κ(x) = a + G (x - c)` with `c` the centroid,
    /// available for linear velocities (pressure order 0).
    pub fn affine_coefficients(&self, e: usize) -> Option<crate::expm::AffineField> {
        if self.space.velocity_degree() != 1 {
            return None;
        }
        let center = self.mesh().centroid(e);
        Some(crate::expm::AffineField {
            a: self.velocity_polynomial(e, &center),
            g: self.velocity_polynomial_gradient(e, &center),
            center,
        })
    }

    /// `self + s · other` on the same space.
    pub fn axpy(&self, s: f64, other: &MixedSolution) -> MixedSolution {
        assert!(Arc::ptr_eq(&self.space, &other.space));
        MixedSolution::new(
            self.space.clone(),
            self.velocity.iter().zip(&other.velocity).map(|(a, b)| a + s * b).collect(),
            self.pressure.iter().zip(&other.pressure).map(|(a, b)| a + s * b).collect(),
        )
    }

    /// Normal velocity jump over interior face quadrature points, maximised.
    pub fn max_normal_jump(&self) -> f64 {
        let mesh = self.mesh();
        let (gx, _) = crate::quadrature::gauss_legendre(self.space.velocity_degree() + 2);
        let mut worst = 0.0f64;
        for (fi, face) in mesh.faces().iter().enumerate() {
            let Some(right) = face.right else { continue };
            let g = mesh.face_geometry(fi);
            for s in &gx {
                let x = g.endpoints[0] * (0.5 * (1.0 - s)) + g.endpoints[1] * (0.5 * (1.0 + s));
                let jump = (self.velocity_polynomial(face.left, &x)
                    - self.velocity_polynomial(right, &x))
                .dot(&g.normal);
                worst = worst.max(jump.abs());
            }
        }
        worst
    }
}
