use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::FemError;
use crate::{Matrix2, Point};

/// Scalar data field `x ↦ value`.
#[derive(Clone)]
pub struct ScalarField(Arc<dyn Fn(&Point) -> f64 + Send + Sync>);

impl ScalarField {
    pub fn new(f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c)
    }

    pub fn eval(&self, x: &Point) -> f64 {
        (self.0)(x)
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarField(..)")
    }
}

/// Region-wise constant rock properties.
#[derive(Clone, Debug, PartialEq)]
pub struct Material {
    /// Hydraulic conductivity tensor (symmetric positive definite).
    pub conductivity: Matrix2<f64>,
    /// Porosity in (0, 1].
    pub porosity: f64,
}

impl Material {
    pub fn isotropic(k: f64, porosity: f64) -> Self {
        Self {
            conductivity: Matrix2::identity() * k,
            porosity,
        }
    }

    /// Eigenvalues `(λ₋, λ₊)` of the conductivity.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let k = &self.conductivity;
        let mean = 0.5 * (k[(0, 0)] + k[(1, 1)]);
        let half = 0.5 * (k[(0, 0)] - k[(1, 1)]);
        let r = (half * half + k[(0, 1)] * k[(1, 0)]).max(0.0).sqrt();
        (mean - r, mean + r)
    }

    fn validate(&self, region: usize) -> Result<(), FemError> {
        let k = &self.conductivity;
        if k[(0, 1)] != k[(1, 0)] {
            return Err(FemError::InvalidMaterial {
                region,
                reason: "conductivity is not symmetric".into(),
            });
        }
        let (lo, hi) = self.eigenvalues();
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(FemError::InvalidMaterial {
                region,
                reason: format!("conductivity eigenvalues ({lo:e}, {hi:e}) not positive"),
            });
        }
        if !(self.porosity > 0.0 && self.porosity <= 1.0) {
            return Err(FemError::InvalidMaterial {
                region,
                reason: format!("porosity {} outside (0, 1]", self.porosity),
            });
        }
        Ok(())
    }
}

/// Data of one Darcy problem: materials per region, source, Dirichlet head
/// and the particle release point. The boundary partition lives on the mesh.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub regions: BTreeMap<usize, Material>,
    pub source: ScalarField,
    pub dirichlet: ScalarField,
    pub release_point: Point,
}

impl ProblemSpec {
    pub fn new(
        regions: BTreeMap<usize, Material>,
        source: ScalarField,
        dirichlet: ScalarField,
        release_point: Point,
    ) -> Result<Self, FemError> {
        for (&id, m) in &regions {
            m.validate(id)?;
        }
        Ok(Self {
            regions,
            source,
            dirichlet,
            release_point,
        })
    }

    pub fn material(&self, region: usize) -> Result<&Material, FemError> {
        self.regions.get(&region).ok_or(FemError::MissingMaterial(region))
    }

    pub fn porosity(&self, region: usize) -> Result<f64, FemError> {
        Ok(self.material(region)?.porosity)
    }
}
