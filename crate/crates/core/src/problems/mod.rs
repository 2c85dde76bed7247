//! Problem definitions loaded from TOML configuration files.
//!
//! A configuration carries an initial conforming triangulation with region
//! tags, per-region materials, boundary tagging rules, the source and
//! Dirichlet data as expressions (see [`expr`] for the grammar), the release
//! point and, optionally, an exact solution used for verification.
//!
//! Boundary faces are tagged by evaluating each `dirichlet` / `neumann`
//! expression at the face midpoint: a face whose midpoint makes the
//! expression vanish (to `1e-9` of the domain diameter) gets that kind. The
//! remaining boundary faces get `boundary.default`.

pub mod expr;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{FemError, Material, ProblemSpec, ScalarField};
use crate::mesh::{build_mesh, BoundaryKind, Mesh, MeshError};
use crate::tracer::VelocityField;
use crate::{Matrix2, Point, Vector2};
pub use expr::{Expr, ExprError, Var};

pub const SELF_CHECK_POINTS: usize = 100;
pub const SELF_CHECK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("cannot serialize configuration: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("expression {field}: {source}")]
    Expr { field: String, source: ExprError },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("region {0} has no material")]
    MissingMaterial(usize),
    #[error("material {0} is defined twice")]
    DuplicateMaterial(usize),
    #[error("exact solution fails self-check at ({x}, {y}): {what} defect {defect:e}")]
    SelfCheck { x: f64, y: f64, what: &'static str, defect: f64 },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKindConfig {
    Dirichlet,
    Neumann,
}

impl From<BoundaryKindConfig> for BoundaryKind {
    fn from(k: BoundaryKindConfig) -> Self {
        match k {
            BoundaryKindConfig::Dirichlet => BoundaryKind::Dirichlet,
            BoundaryKindConfig::Neumann => BoundaryKind::Neumann,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RefinementMode {
    #[default]
    Uniform,
    Adaptive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub region: usize,
    pub name: String,
    /// Row-major conductivity tensor.
    pub conductivity: [[f64; 2]; 2],
    pub porosity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub default: BoundaryKindConfig,
    #[serde(default)]
    pub dirichlet: Vec<String>,
    #[serde(default)]
    pub neumann: Vec<String>,
    pub pressure: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactConfig {
    pub velocity: [String; 2],
    pub pressure: String,
    pub travel_time: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementConfig {
    pub mode: RefinementMode,
    pub fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_dofs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            mode: RefinementMode::Uniform,
            fraction: 0.10,
            max_dofs: None,
            max_iters: Some(6),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    pub description: String,
    pub provenance: String,
    pub release_point: [f64; 2],
    /// Upper bound on the travel time, used as the tracer's budget.
    pub max_time: f64,
    pub source: String,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    pub geometry: GeometryConfig,
    pub materials: Vec<MaterialConfig>,
    pub boundary: BoundaryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactConfig>,
    #[serde(default)]
    pub refinement: RefinementConfig,
}

/// Exact solution in closed form.
#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub velocity: [Arc<Expr>; 2],
    pub pressure: Arc<Expr>,
    pub travel_time: f64,
}

impl ExactSolution {
    pub fn velocity_at(&self, x: &Point) -> Vector2<f64> {
        Vector2::new(self.velocity[0].eval(x.x, x.y), self.velocity[1].eval(x.x, x.y))
    }

    /// `∂u_a/∂x_b`.
    pub fn velocity_gradient(&self) -> [[Arc<Expr>; 2]; 2] {
        let d = |a: usize, v: Var| Arc::new(self.velocity[a].derivative(v));
        [[d(0, Var::X), d(0, Var::Y)], [d(1, Var::X), d(1, Var::Y)]]
    }
}

/// Loaded problem: initial mesh, discrete problem data and optional exact
/// solution.
#[derive(Clone, Debug)]
pub struct Problem {
    pub config: ProblemConfig,
    pub mesh: Mesh,
    pub spec: ProblemSpec,
    pub exact: Option<ExactSolution>,
}

fn parse(field: &str, src: &str, constants: &BTreeMap<String, f64>) -> Result<Arc<Expr>, ProblemError> {
    Expr::parse_with(src, constants)
        .map(Arc::new)
        .map_err(|source| ProblemError::Expr {
            field: field.into(),
            source,
        })
}

fn scalar_field(e: Arc<Expr>) -> ScalarField {
    ScalarField::new(move |x: &Point| e.eval(x.x, x.y))
}

impl ProblemConfig {
    pub fn from_toml(text: &str) -> Result<Self, ProblemError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProblemError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, ProblemError> {
        Ok(toml::to_string(self)?)
    }

    /// Validates the configuration and builds mesh and problem data. Runs
    /// the exact-solution self-check when an exact solution is present.
    pub fn build(&self) -> Result<Problem, ProblemError> {
        let c = &self.constants;
        let g = &self.geometry;
        let vertices: Vec<Point> = g.vertices.iter().map(|v| Point::new(v[0], v[1])).collect();
        let (lo, hi) = vertices.iter().fold(
            (Point::repeat(f64::INFINITY), Point::repeat(f64::NEG_INFINITY)),
            |(lo, hi), v| (lo.inf(v), hi.sup(v)),
        );
        let diam = (hi - lo).norm();

        let rules: Vec<(Arc<Expr>, BoundaryKind)> = self
            .boundary
            .dirichlet
            .iter()
            .map(|s| Ok((parse("boundary.dirichlet", s, c)?, BoundaryKind::Dirichlet)))
            .chain(
                self.boundary
                    .neumann
                    .iter()
                    .map(|s| Ok((parse("boundary.neumann", s, c)?, BoundaryKind::Neumann))),
            )
            .collect::<Result<_, ProblemError>>()?;
        let default = BoundaryKind::from(self.boundary.default);
        let tagger = move |m: &Point| {
            rules
                .iter()
                .find(|(e, _)| e.eval(m.x, m.y).abs() <= 1e-9 * diam.max(1.0))
                .map(|r| r.1)
                .or(Some(default))
        };
        let mesh = build_mesh(vertices, g.triangles.clone(), g.regions.clone(), tagger)?;

        let mut regions = BTreeMap::new();
        for m in &self.materials {
            let k = Matrix2::new(m.conductivity[0][0], m.conductivity[0][1], m.conductivity[1][0], m.conductivity[1][1]);
            let mat = Material {
                conductivity: k,
                porosity: m.porosity,
            };
            if regions.insert(m.region, mat).is_some() {
                return Err(ProblemError::DuplicateMaterial(m.region));
            }
        }
        for &r in &g.regions {
            if !regions.contains_key(&r) {
                return Err(ProblemError::MissingMaterial(r));
            }
        }

        let source = parse("source", &self.source, c)?;
        let pressure = parse("boundary.pressure", &self.boundary.pressure, c)?;
        let release = Point::new(self.release_point[0], self.release_point[1]);
        let spec = ProblemSpec::new(regions, scalar_field(source.clone()), scalar_field(pressure), release)?;
        if !(self.max_time > 0.0) {
            return Err(ProblemError::Invalid("max_time must be positive".into()));
        }
        let r = &self.refinement;
        if !(r.fraction > 0.0 && r.fraction <= 1.0) {
            return Err(ProblemError::Invalid(format!("refinement fraction {} not in (0, 1]", r.fraction)));
        }

        let exact = match &self.exact {
            None => None,
            Some(e) => {
                let t = parse("exact.travel_time", &e.travel_time, c)?;
                let travel_time = t
                    .constant_value()
                    .ok_or_else(|| ProblemError::Invalid("exact.travel_time must not depend on x or y".into()))?;
                let ex = ExactSolution {
                    velocity: [parse("exact.velocity", &e.velocity[0], c)?, parse("exact.velocity", &e.velocity[1], c)?],
                    pressure: parse("exact.pressure", &e.pressure, c)?,
                    travel_time,
                };
                self_check(&ex, &source, &mesh, &spec)?;
                Some(ex)
            }
        };
        Ok(Problem {
            config: self.clone(),
            mesh,
            spec,
            exact,
        })
    }
}

/// Checks `u = -K∇p` and `∇·u = f` at random points of the domain.
fn self_check(ex: &ExactSolution, source: &Expr, mesh: &Mesh, spec: &ProblemSpec) -> Result<(), ProblemError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f_c4ec);
    let total: f64 = (0..mesh.num_elements()).map(|e| mesh.area(e)).sum();
    let dp = [ex.pressure.derivative(Var::X), ex.pressure.derivative(Var::Y)];
    let grad = ex.velocity_gradient();
    for _ in 0..SELF_CHECK_POINTS {
        let mut pick = rng.random::<f64>() * total;
        let mut e = 0;
        while e + 1 < mesh.num_elements() && pick > mesh.area(e) {
            pick -= mesh.area(e);
            e += 1;
        }
        let (mut a, mut b) = (rng.random::<f64>(), rng.random::<f64>());
        if a + b > 1.0 {
            (a, b) = (1.0 - a, 1.0 - b);
        }
        let v = mesh.element_vertices(e);
        let x = v[0] + (v[1] - v[0]) * a + (v[2] - v[0]) * b;
        let k = spec.material(mesh.region(e))?.conductivity;
        let u = ex.velocity_at(&x);
        let gp = Vector2::new(dp[0].eval(x.x, x.y), dp[1].eval(x.x, x.y));
        let darcy = (u + k * gp).norm();
        if darcy > SELF_CHECK_TOL * u.norm().max(1.0) {
            return Err(ProblemError::SelfCheck {
                x: x.x,
                y: x.y,
                what: "u + K grad p",
                defect: darcy,
            });
        }
        let div = grad[0][0].eval(x.x, x.y) + grad[1][1].eval(x.x, x.y);
        let f = source.eval(x.x, x.y);
        if (div - f).abs() > SELF_CHECK_TOL * f.abs().max(1.0) {
            return Err(ProblemError::SelfCheck {
                x: x.x,
                y: x.y,
                what: "div u - f",
                defect: (div - f).abs(),
            });
        }
    }
    Ok(())
}

impl Problem {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProblemError> {
        ProblemConfig::load(path)?.build()
    }

    /// The exact transport velocity `u/φ`, when an exact solution is given
    /// and the porosity is uniform.
    pub fn exact_transport_field(&self) -> Option<VelocityField> {
        let ex = self.exact.as_ref()?;
        let phis: Vec<f64> = self.config.materials.iter().map(|m| m.porosity).collect();
        if phis.windows(2).any(|w| w[0] != w[1]) {
            return None;
        }
        let phi = phis[0];
        let u = ex.velocity.clone();
        let g = ex.velocity_gradient();
        Some(VelocityField::analytic(
            move |x| Vector2::new(u[0].eval(x.x, x.y), u[1].eval(x.x, x.y)) / phi,
            move |x| {
                Matrix2::new(
                    g[0][0].eval(x.x, x.y),
                    g[0][1].eval(x.x, x.y),
                    g[1][0].eval(x.x, x.y),
                    g[1][1].eval(x.x, x.y),
                ) / phi
            },
        ))
    }
}

const EXAMPLE_I: &str = include_str!("../../configs/example_1.toml");
const EXAMPLE_II: &str = include_str!("../../configs/example_2.toml");
const EXAMPLE_III: &str = include_str!("../../configs/example_3.toml");

/// Unit square, `u = (sin x, cos y)`, all-Dirichlet, analytic travel time.
pub fn example_i() -> ProblemConfig {
    ProblemConfig::from_toml(EXAMPLE_I).expect("shipped config parses")
}

/// Two-layer trapezoid with atmospheric pressure on the sloping top.
pub fn example_ii() -> ProblemConfig {
    ProblemConfig::from_toml(EXAMPLE_II).expect("shipped config parses")
}

/// Six-layer cross-section with a nearly impermeable basement.
pub fn example_iii() -> ProblemConfig {
    ProblemConfig::from_toml(EXAMPLE_III).expect("shipped config parses")
}

/// Shipped configurations by name.
pub fn builtin(name: &str) -> Option<ProblemConfig> {
    match name {
        "example_1" | "example-1" | "I" => Some(example_i()),
        "example_2" | "example-2" | "II" => Some(example_ii()),
        "example_3" | "example-3" | "III" => Some(example_iii()),
        _ => None,
    }
}
