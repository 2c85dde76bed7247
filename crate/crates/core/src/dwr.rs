//! Dual-weighted-residual estimate of the travel time error.
//!
//! The discrete adjoint `(z_h, r_h)` solves the primal saddle-point problem in
//! the next richer space with the travel time derivative as right-hand side.
//! The error is estimated by the residual of the primal solution tested with
//! `(z_h - z_I, r_h - r_I)`, localised element by element into boundary,
//! Darcy-law, mass-conservation and pressure-jump contributions.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::adjoint::{solve_adjoint, AdjointError, AdjointTrajectory, DEFAULT_QUADRATURE};
use crate::fem::{self, face_rule, volume_rule, FemError, MixedSolution, MixedSpace, ProblemSpec, SaddleSystem};
use crate::mesh::{BoundaryKind, Mesh};
use crate::tracer::{trace, transport_field, TraceError, Trajectory, VelocityField};
use crate::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DwrError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Adjoint(#[from] AdjointError),
    #[error("adjoint trajectory and space live on different meshes")]
    MeshMismatch,
    #[error("estimate is zero; effectivity undefined")]
    ZeroEstimate,
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn same_mesh(a: &Arc<Mesh>, b: &Arc<Mesh>) -> bool {
    Arc::ptr_eq(a, b) || (a.triangles() == b.triangles() && a.vertices() == b.vertices())
}

/// Travel time derivative tested with every basis function of `space_w`:
/// velocity entries `∫ Z·φ_j(X)/φ dt`, pressure entries zero. Returned as
/// full (velocity, pressure) coefficient vectors.
pub fn assemble_adjoint_rhs(
    space_w: &MixedSpace,
    adj: &AdjointTrajectory,
    problem: &ProblemSpec,
) -> Result<(Vec<f64>, Vec<f64>), DwrError> {
    if let VelocityField::Discrete(d) = &adj.field {
        if !same_mesh(d.solution.mesh(), space_w.mesh()) {
            return Err(DwrError::MeshMismatch);
        }
    }
    let mesh = space_w.mesh();
    let mut rhs = vec![0.0; space_w.n_velocity()];
    for node in adj.nodes(DEFAULT_QUADRATURE) {
        let phi = problem.porosity(mesh.region(node.element))?;
        let basis = space_w.velocity_basis(node.element, &node.x);
        for (d, b) in space_w.velocity_dofs(node.element).into_iter().zip(&basis) {
            rhs[d] += node.weight * node.z.dot(b) / phi;
        }
    }
    Ok((rhs, vec![0.0; space_w.n_pressure()]))
}

/// Solves the adjoint system on `W_h` with the derivative right-hand side.
pub fn solve_discrete_adjoint(
    system_w: &SaddleSystem,
    rhs: &(Vec<f64>, Vec<f64>),
) -> Result<MixedSolution, DwrError> {
    Ok(system_w.solve_with(&rhs.0, &rhs.1)?)
}

/// `L²` projection of a piecewise function onto the pressure space.
pub fn project_pressure(space: &MixedSpace, f: impl Fn(usize, &Point) -> f64) -> Vec<f64> {
    let mesh = space.mesh();
    let np = space.local_pressure_dofs();
    let rule = volume_rule(space);
    let mut out = vec![0.0; space.n_pressure()];
    for e in 0..mesh.num_elements() {
        let mut m = DMatrix::<f64>::zeros(np, np);
        let mut b = DVector::<f64>::zeros(np);
        for (x, w) in rule.on_triangle(&mesh.element_vertices(e)) {
            let q = space.pressure_basis(e, &x);
            let fx = f(e, &x);
            for i in 0..np {
                b[i] += w * fx * q[i];
                for j in 0..np {
                    m[(i, j)] += w * q[i] * q[j];
                }
            }
        }
        let c = m.cholesky().expect("pressure mass matrix is SPD").solve(&b);
        out[space.pressure_dofs(e)].copy_from_slice(c.as_slice());
    }
    out
}

/// Canonical velocity interpolant and `L²` pressure projection of a field
/// given on any space over the same mesh.
pub fn interpolate_into(target: &Arc<MixedSpace>, source: &MixedSolution) -> MixedSolution {
    let mut v = target.interpolate_velocity(|e, x| source.velocity_polynomial(e, x));
    for (c, &fixed) in v.iter_mut().zip(target.constrained()) {
        if fixed {
            *c = 0.0;
        }
    }
    let p = project_pressure(target, |e, x| source.pressure_at(e, x));
    MixedSolution::new(target.clone(), v, p)
}

/// `(z_I, r_I)` in the primal space.
pub fn interpolate_adjoint(adj_sol: &MixedSolution, primal_space: &Arc<MixedSpace>) -> MixedSolution {
    interpolate_into(primal_space, adj_sol)
}

/// `(z_h - z_I, r_h - r_I)` as a function on the adjoint space. The face
/// moments shared by both spaces coincide by construction of the
/// interpolant and are set to zero exactly; the top face moment of `z_I`
/// vanishes, so that entry is copied from `z_h`.
pub fn adjoint_weight(adj_sol: &MixedSolution, interpolant: &MixedSolution) -> MixedSolution {
    let w = &adj_sol.space;
    let embedded = interpolate_into(w, interpolant);
    let mut v: Vec<f64> = adj_sol.velocity.iter().zip(&embedded.velocity).map(|(a, b)| a - b).collect();
    let per_face = w.dofs_per_face();
    for f in 0..w.mesh().num_faces() {
        for j in 0..per_face {
            let d = f * per_face + j;
            v[d] = if j + 1 == per_face { adj_sol.velocity[d] } else { 0.0 };
        }
    }
    let p = adj_sol.pressure.iter().zip(&embedded.pressure).map(|(a, b)| a - b).collect();
    MixedSolution::new(w.clone(), v, p)
}

/// Per-element signed indicator components.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IndicatorSet {
    pub bc: Vec<f64>,
    pub dl: Vec<f64>,
    pub cm: Vec<f64>,
    pub pr: Vec<f64>,
}

impl IndicatorSet {
    pub fn len(&self) -> usize {
        self.bc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bc.is_empty()
    }

    /// `η_κ`, the sum of the four components.
    pub fn element(&self, e: usize) -> f64 {
        neumaier_sum([self.bc[e], self.dl[e], self.cm[e], self.pr[e]])
    }

    pub fn totals(&self) -> Vec<f64> {
        (0..self.len()).map(|e| self.element(e)).collect()
    }

    /// Component sums `(BC, DL, CM, PR)`.
    pub fn component_totals(&self) -> [f64; 4] {
        [&self.bc, &self.dl, &self.cm, &self.pr].map(|v| neumaier_sum(v.iter().copied()))
    }
}

/// Element indicators of the residual of `primal` tested with
/// `weight = (z_h - z_I, r_h - r_I)`. Quadrature follows the weight's space.
pub fn compute_indicators(
    primal: &MixedSolution,
    weight: &MixedSolution,
    problem: &ProblemSpec,
) -> Result<IndicatorSet, DwrError> {
    let mesh = primal.mesh().clone();
    if !same_mesh(&mesh, weight.mesh()) {
        return Err(DwrError::MeshMismatch);
    }
    let w_space = &weight.space;
    let rule = volume_rule(w_space);
    let (gx, gw) = face_rule(w_space);
    let ne = mesh.num_elements();
    let mut set = IndicatorSet {
        bc: vec![0.0; ne],
        dl: vec![0.0; ne],
        cm: vec![0.0; ne],
        pr: vec![0.0; ne],
    };
    let dz = |e: usize, x: &Point| weight.velocity_polynomial(e, x);
    for e in 0..ne {
        let kinv = problem
            .material(mesh.region(e))?
            .conductivity
            .try_inverse()
            .ok_or(FemError::InvalidMaterial {
                region: mesh.region(e),
                reason: "conductivity not invertible".into(),
            })?;
        let mut dl = Vec::new();
        let mut cm = Vec::new();
        for (x, w) in rule.on_triangle(&mesh.element_vertices(e)) {
            let u = primal.velocity_polynomial(e, &x);
            let gp = primal.pressure_gradient(e, &x);
            dl.push(-w * (kinv * u + gp).dot(&dz(e, &x)));
            let dr = weight.pressure_at(e, &x);
            cm.push(w * dr * (primal.divergence(e, &x) - problem.source.eval(&x)));
        }
        set.dl[e] = neumaier_sum(dl);
        set.cm[e] = neumaier_sum(cm);

        let mut bc = Vec::new();
        let mut pr = Vec::new();
        for (i, &f) in mesh.element_faces(e).iter().enumerate() {
            let face = mesh.face(f);
            let g = mesh.face_geometry(f);
            let n = g.normal * mesh.face_sign(e, i);
            let neighbor = mesh.neighbor(e, i);
            let dirichlet = face.boundary == Some(BoundaryKind::Dirichlet);
            if neighbor.is_none() && !dirichlet {
                continue;
            }
            for (s, w) in gx.iter().zip(&gw) {
                let x = g.endpoints[0] * (0.5 * (1.0 - s)) + g.endpoints[1] * (0.5 * (1.0 + s));
                let ds = 0.5 * w * g.length;
                let vn = dz(e, &x).dot(&n);
                let p = primal.pressure_at(e, &x);
                match neighbor {
                    None => bc.push(ds * vn * (p - problem.dirichlet.eval(&x))),
                    Some(nb) => pr.push(0.5 * ds * vn * (p - primal.pressure_at(nb, &x))),
                }
            }
        }
        set.bc[e] = neumaier_sum(bc);
        set.pr[e] = neumaier_sum(pr);
    }
    Ok(set)
}

/// `Σ_κ η_κ`.
pub fn global_estimate(ind: &IndicatorSet) -> f64 {
    neumaier_sum((0..ind.len()).flat_map(|e| [ind.bc[e], ind.dl[e], ind.cm[e], ind.pr[e]]))
}

/// `θ = error / estimate`.
pub fn effectivity(error: f64, estimate: f64) -> Result<f64, DwrError> {
    if estimate == 0.0 {
        return Err(DwrError::ZeroEstimate);
    }
    Ok(error / estimate)
}

/// Residual `ℒ(v, q) - 𝒜((u_h, p_h), (v, q))` evaluated with the assembled
/// operator on the adjoint space, without any localisation. `test` lives on
/// the space of `system_w`; `primal` is embedded into it first.
pub fn global_residual(system_w: &SaddleSystem, primal: &MixedSolution, test: &MixedSolution) -> f64 {
    let embedded = interpolate_into(&system_w.space, primal);
    let x = system_w.restrict(&embedded.velocity, &embedded.pressure);
    let y = system_w.restrict(&test.velocity, &test.pressure);
    let ax = system_w.matrix.mul_vec(&x);
    neumaier_sum(system_w.rhs.iter().zip(&ax).zip(&y).flat_map(|((b, a), yi)| [b * yi, -a * yi]))
}

/// Value of a residual together with the sum of the magnitudes of the
/// quadrature terms it was formed from, which bounds its rounding error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualEvaluation {
    pub value: f64,
    pub magnitude: f64,
}

/// The same residual evaluated pointwise from its defining integrals,
/// `-⟨v·n, g_D⟩ - ∫K⁻¹u_h·v + ∫p_h ∇·v + ∫q (∇·u_h - f)`, on the quadrature
/// of the test space.
pub fn pointwise_residual(
    primal: &MixedSolution,
    test: &MixedSolution,
    problem: &ProblemSpec,
) -> Result<ResidualEvaluation, DwrError> {
    let mesh = test.mesh().clone();
    if !same_mesh(&mesh, primal.mesh()) {
        return Err(DwrError::MeshMismatch);
    }
    let rule = volume_rule(&test.space);
    let (gx, gw) = face_rule(&test.space);
    let mut terms = Vec::new();
    for e in 0..mesh.num_elements() {
        let kinv = problem.material(mesh.region(e))?.conductivity.try_inverse().unwrap_or_default();
        for (x, w) in rule.on_triangle(&mesh.element_vertices(e)) {
            let v = test.velocity_polynomial(e, &x);
            terms.push(-w * (kinv * primal.velocity_polynomial(e, &x)).dot(&v));
            terms.push(w * primal.pressure_at(e, &x) * test.divergence(e, &x));
            terms.push(w * test.pressure_at(e, &x) * (primal.divergence(e, &x) - problem.source.eval(&x)));
        }
    }
    for (f, face) in mesh.faces().iter().enumerate() {
        if face.boundary != Some(BoundaryKind::Dirichlet) {
            continue;
        }
        let g = mesh.face_geometry(f);
        for (s, w) in gx.iter().zip(&gw) {
            let x = g.endpoints[0] * (0.5 * (1.0 - s)) + g.endpoints[1] * (0.5 * (1.0 + s));
            let vn = test.velocity_polynomial(face.left, &x).dot(&g.normal);
            terms.push(-0.5 * w * g.length * vn * problem.dirichlet.eval(&x));
        }
    }
    Ok(ResidualEvaluation {
        magnitude: neumaier_sum(terms.iter().map(|t| t.abs())),
        value: neumaier_sum(terms),
    })
}

/// Everything produced by one primal/adjoint cycle on a mesh.
#[derive(Debug)]
pub struct DwrReport {
    pub primal_system: SaddleSystem,
    pub primal: MixedSolution,
    pub field: VelocityField,
    pub trajectory: Trajectory,
    pub adjoint_path: AdjointTrajectory,
    pub adjoint_system: SaddleSystem,
    pub adjoint: MixedSolution,
    pub interpolant: MixedSolution,
    pub weight: MixedSolution,
    pub indicators: IndicatorSet,
    pub travel_time: f64,
    pub estimate: f64,
    pub n_dofs: usize,
}

impl DwrReport {
    /// The localisation identity's right-hand side.
    pub fn direct_residual(&self) -> f64 {
        global_residual(&self.adjoint_system, &self.primal, &self.weight)
    }

    pub fn pointwise_residual(&self, problem: &ProblemSpec) -> Result<ResidualEvaluation, DwrError> {
        pointwise_residual(&self.primal, &self.weight, problem)
    }
}

/// Pipeline stage, for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Primal,
    Trajectory,
    AdjointTrajectory,
    DiscreteAdjoint,
    Indicators,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Primal => "primal solve",
            Stage::Trajectory => "trajectory",
            Stage::AdjointTrajectory => "adjoint trajectory",
            Stage::DiscreteAdjoint => "discrete adjoint",
            Stage::Indicators => "indicators",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage}: {error}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub error: DwrError,
}

impl DwrError {
    /// Tangential or vertex crossings and similar violations of the tracing
    /// hypotheses, as opposed to numerical failures.
    pub fn is_assumption_violation(&self) -> bool {
        match self {
            DwrError::Trace(e) => e.is_assumption_violation(),
            DwrError::Adjoint(e) => matches!(e, AdjointError::TangentialExit { .. } | AdjointError::TangentialCrossing { .. }),
            _ => false,
        }
    }
}

fn at<E: Into<DwrError>>(stage: Stage) -> impl Fn(E) -> StageError {
    move |e| StageError {
        stage,
        error: e.into(),
    }
}

/// Primal solve, trajectory, adjoint trajectory, discrete adjoint and
/// indicators on one mesh with primal order `order`.
pub fn run_dwr(mesh: Arc<Mesh>, problem: &ProblemSpec, order: usize, t_max: f64) -> Result<DwrReport, StageError> {
    use Stage::*;
    let space = fem::build_space(mesh.clone(), order).map_err(at(Primal))?;
    let primal_system = fem::assemble(&space, problem).map_err(at(Primal))?;
    let primal = fem::solve(&primal_system).map_err(at(Primal))?;
    let field = transport_field(&primal, problem).map_err(at(Primal))?;
    let trajectory = trace(&field, &mesh, problem.release_point, t_max).map_err(at(Trajectory))?;
    let adjoint_path = solve_adjoint(&trajectory, &field).map_err(at(AdjointTrajectory))?;
    let space_w = fem::build_space(mesh.clone(), order + 1).map_err(at(DiscreteAdjoint))?;
    let adjoint_system = fem::assemble(&space_w, problem).map_err(at(DiscreteAdjoint))?;
    let rhs = assemble_adjoint_rhs(&space_w, &adjoint_path, problem).map_err(at(DiscreteAdjoint))?;
    let adjoint = solve_discrete_adjoint(&adjoint_system, &rhs).map_err(at(DiscreteAdjoint))?;
    let interpolant = interpolate_adjoint(&adjoint, &space);
    let weight = adjoint_weight(&adjoint, &interpolant);
    let indicators = compute_indicators(&primal, &weight, problem).map_err(at(Indicators))?;
    let estimate = global_estimate(&indicators);
    Ok(DwrReport {
        primal_system,
        n_dofs: space.n_dofs(),
        primal,
        field,
        travel_time: trajectory.travel_time,
        trajectory,
        adjoint_path,
        adjoint_system,
        adjoint,
        interpolant,
        weight,
        indicators,
        estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effectivity_examples() {
        assert_eq!(effectivity(2.5, 2.5).unwrap(), 1.0);
        assert!(effectivity(1.0, 0.0).is_err());
    }

    #[test]
    fn compensated_sum() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(neumaier_sum(v), 2.0);
    }
}
