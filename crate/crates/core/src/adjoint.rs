//! Backward adjoint trajectory and the Gâteaux derivative of the travel time.
//!
//! Along a traced path `X(t)` the adjoint `Z` solves `-Ż = [∇v(X)]ᵀ Z`
//! backwards from `Z(T) = -n / (v·n)`. Where the path crosses a face on which
//! `v` jumps, `Z` jumps according to
//!
//! ```text
//!   Z(t⁻) = Z(t⁺) + (Z(t⁺)·⟦v⟧) n / (v⁻·n),   ⟦v⟧ = v⁺ - v⁻.
//! ```
//!
//! The derivative in direction `w` is then `T'[v](w) = ∫₀ᵀ Z·w(X) dt`.

use nalgebra::SVector;
use thiserror::Error;

use crate::expm::expm2;
use crate::fem::{FemError, MixedSolution, ProblemSpec};
use crate::mesh::Mesh;
use crate::ode::{integrate, Tolerances};
use crate::quadrature::LineRule;
use crate::tracer::{SegmentPath, Trajectory, VelocityField, TANGENT_TOL};
use crate::{Matrix2, Point, Vector2};

/// Default Gauss–Legendre points per segment.
pub const DEFAULT_QUADRATURE: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdjointError {
    #[error("trajectory leaves tangentially (|v·n|/|v| = {ratio:e})")]
    TangentialExit { ratio: f64 },
    #[error("near-tangential face crossing at t = {t:e} (|v·n|/|v| = {ratio:e})")]
    TangentialCrossing { t: f64, ratio: f64 },
    #[error("adjoint integration failed on segment {segment}")]
    Integration { segment: usize },
    #[error("trajectory has no segments")]
    Empty,
}

/// `Z(T) = -n / (v·n)`.
pub fn terminal_condition(traj: &Trajectory) -> Result<Vector2<f64>, AdjointError> {
    let v = traj.exit_velocity;
    let n = traj.exit_normal;
    let vn = v.dot(&n);
    let ratio = vn.abs() / v.norm();
    if !(ratio > TANGENT_TOL) {
        return Err(AdjointError::TangentialExit { ratio });
    }
    Ok(-n / vn)
}

/// Adjoint value just before a crossing from the value just after it.
/// The result does not depend on the sign of `n_minus`.
pub fn jump_backward(
    z_plus: &Vector2<f64>,
    v_minus: &Vector2<f64>,
    v_plus: &Vector2<f64>,
    n_minus: &Vector2<f64>,
) -> Result<Vector2<f64>, AdjointError> {
    let vn = v_minus.dot(n_minus);
    let ratio = vn.abs() / v_minus.norm();
    if !(ratio > TANGENT_TOL) {
        return Err(AdjointError::TangentialCrossing { t: f64::NAN, ratio });
    }
    let jump = v_plus - v_minus;
    Ok(z_plus + n_minus * (z_plus.dot(&jump) / vn))
}

/// Values recorded at one interior crossing.
#[derive(Clone, Debug)]
pub struct JumpRecord {
    pub t: f64,
    pub z_minus: Vector2<f64>,
    pub z_plus: Vector2<f64>,
    pub v_minus: Vector2<f64>,
    pub v_plus: Vector2<f64>,
    pub normal: Vector2<f64>,
}

impl JumpRecord {
    /// Relative defect of `⟦Z⟧ = -(Z⁺·⟦v⟧) n / (v⁻·n)`.
    pub fn identity_defect(&self) -> f64 {
        let lhs = self.z_plus - self.z_minus;
        let rhs = -self.normal * (self.z_plus.dot(&(self.v_plus - self.v_minus)) / self.v_minus.dot(&self.normal));
        let scale = self.z_plus.norm().max(self.z_minus.norm()).max(f64::MIN_POSITIVE);
        (lhs - rhs).norm() / scale
    }
}

#[derive(Clone, Debug)]
pub struct AdjointSegment {
    /// `Υ = [∇v]ᵀ` when constant on the segment.
    pub upsilon: Option<Matrix2<f64>>,
    /// `Z(t_i⁻)` at the segment's right end.
    pub z_right: Vector2<f64>,
    /// `Z(t_{i-1}⁺)` at the segment's left end.
    pub z_left: Vector2<f64>,
}

/// One time-quadrature node along the path.
#[derive(Clone, Debug)]
pub struct QuadNode {
    pub segment: usize,
    pub element: usize,
    pub t: f64,
    pub x: Point,
    pub z: Vector2<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct AdjointTrajectory {
    pub trajectory: Trajectory,
    pub field: VelocityField,
    pub terminal: Vector2<f64>,
    pub segments: Vec<AdjointSegment>,
    /// One record per interior crossing, in forward time order.
    pub jumps: Vec<JumpRecord>,
}

fn tolerances() -> Tolerances {
    Tolerances {
        rtol: 1e-12,
        atol: 1e-14,
    }
}

/// Backward integration of `(X, Z)` on a general segment from `t1` to `t`.
fn integrate_pair(
    field: &VelocityField,
    element: usize,
    x1: &Point,
    z1: &Vector2<f64>,
    t1: f64,
    t: f64,
) -> Option<(Point, Vector2<f64>)> {
    let rhs = |s: f64, y: &SVector<f64, 4>| {
        let x = Point::new(y[0], y[1]);
        let z = Vector2::new(y[2], y[3]);
        let v = field.eval(element, &x, s);
        let dz = -(field.gradient(element, &x, s).transpose() * z);
        SVector::<f64, 4>::new(v.x, v.y, dz.x, dz.y)
    };
    let y1 = SVector::<f64, 4>::new(x1.x, x1.y, z1.x, z1.y);
    let y = integrate(rhs, t1, y1, t, tolerances()).ok()?;
    Some((Point::new(y[0], y[1]), Vector2::new(y[2], y[3])))
}

/// Walks the trajectory backwards, propagating `Z` inside segments and
/// applying the jump rule at every crossing.
pub fn solve_adjoint(traj: &Trajectory, field: &VelocityField) -> Result<AdjointTrajectory, AdjointError> {
    if traj.segments.is_empty() {
        return Err(AdjointError::Empty);
    }
    let terminal = terminal_condition(traj)?;
    let n = traj.segments.len();
    let mut segments = vec![
        AdjointSegment {
            upsilon: None,
            z_right: Vector2::zeros(),
            z_left: Vector2::zeros(),
        };
        n
    ];
    let mut jumps = Vec::with_capacity(n.saturating_sub(1));
    let mut z_right = terminal;
    for i in (0..n).rev() {
        let seg = &traj.segments[i];
        let (upsilon, z_left) = match &seg.path {
            SegmentPath::Affine(a) if !field.is_time_dependent() => {
                let up = a.g.transpose();
                (Some(up), expm2(&(up * (seg.t1 - seg.t0))) * z_right)
            }
            _ => {
                let (_, z) = integrate_pair(field, seg.element, &seg.exit, &z_right, seg.t1, seg.t0)
                    .ok_or(AdjointError::Integration { segment: i })?;
                (None, z)
            }
        };
        segments[i] = AdjointSegment {
            upsilon,
            z_right,
            z_left,
        };
        if i > 0 {
            let prev = &traj.segments[i - 1];
            let x = prev.exit;
            let v_minus = field.eval(prev.element, &x, prev.t1);
            let v_plus = field.eval(seg.element, &x, seg.t0);
            let z_minus = jump_backward(&z_left, &v_minus, &v_plus, &prev.normal).map_err(|e| match e {
                AdjointError::TangentialCrossing { ratio, .. } => AdjointError::TangentialCrossing { t: prev.t1, ratio },
                other => other,
            })?;
            jumps.push(JumpRecord {
                t: prev.t1,
                z_minus,
                z_plus: z_left,
                v_minus,
                v_plus,
                normal: prev.normal,
            });
            z_right = z_minus;
        }
    }
    jumps.reverse();
    Ok(AdjointTrajectory {
        trajectory: traj.clone(),
        field: field.clone(),
        terminal,
        segments,
        jumps,
    })
}

/// Velocity perturbation evaluated along the path; `element` is the element
/// the path is in at `x`.
pub trait Perturbation {
    fn eval(&self, element: usize, x: &Point, t: f64) -> Vector2<f64>;
}

impl<F> Perturbation for F
where
    F: Fn(usize, &Point, f64) -> Vector2<f64>,
{
    fn eval(&self, element: usize, x: &Point, t: f64) -> Vector2<f64> {
        self(element, x, t)
    }
}

impl Perturbation for MixedSolution {
    fn eval(&self, element: usize, x: &Point, _t: f64) -> Vector2<f64> {
        self.velocity_polynomial(element, x)
    }
}

impl Perturbation for VelocityField {
    fn eval(&self, element: usize, x: &Point, t: f64) -> Vector2<f64> {
        VelocityField::eval(self, element, x, t)
    }
}

impl AdjointTrajectory {
    /// `Z(t)` on segment `i`.
    pub fn z_at(&self, i: usize, t: f64) -> Vector2<f64> {
        let seg = &self.trajectory.segments[i];
        let a = &self.segments[i];
        match a.upsilon {
            Some(up) => expm2(&(up * (seg.t1 - t))) * a.z_right,
            None => integrate_pair(&self.field, seg.element, &seg.exit, &a.z_right, seg.t1, t)
                .map(|(_, z)| z)
                .unwrap_or_else(|| Vector2::repeat(f64::NAN)),
        }
    }

    /// Gauss nodes with `q` points per segment, carrying `X(t)` and `Z(t)`.
    pub fn nodes(&self, q: usize) -> Vec<QuadNode> {
        let rule = LineRule::new(q);
        let mut out = Vec::with_capacity(q * self.segments.len());
        for (i, seg) in self.trajectory.segments.iter().enumerate() {
            let len = seg.t1 - seg.t0;
            let a = &self.segments[i];
            match a.upsilon {
                Some(up) => {
                    for (s, w) in rule.points.iter().zip(&rule.weights) {
                        let t = seg.t0 + s * len;
                        out.push(QuadNode {
                            segment: i,
                            element: seg.element,
                            t,
                            x: self.trajectory.position(&self.field, i, t),
                            z: expm2(&(up * (seg.t1 - t))) * a.z_right,
                            weight: w * len,
                        });
                    }
                }
                None => {
                    // march backwards through the nodes of this segment
                    let mut order: Vec<usize> = (0..rule.points.len()).collect();
                    order.sort_by(|&p, &q| rule.points[q].total_cmp(&rule.points[p]));
                    let (mut tc, mut xc, mut zc) = (seg.t1, seg.exit, a.z_right);
                    let mut local = Vec::with_capacity(order.len());
                    for k in order {
                        let t = seg.t0 + rule.points[k] * len;
                        let (x, z) = integrate_pair(&self.field, seg.element, &xc, &zc, tc, t)
                            .unwrap_or((Point::repeat(f64::NAN), Vector2::repeat(f64::NAN)));
                        (tc, xc, zc) = (t, x, z);
                        local.push((k, QuadNode {
                            segment: i,
                            element: seg.element,
                            t,
                            x,
                            z,
                            weight: rule.weights[k] * len,
                        }));
                    }
                    local.sort_by_key(|(k, _)| *k);
                    out.extend(local.into_iter().map(|(_, n)| n));
                }
            }
        }
        out
    }

    /// Largest relative defect of the jump identity over all crossings.
    pub fn max_jump_defect(&self) -> f64 {
        self.jumps.iter().map(JumpRecord::identity_defect).fold(0.0, f64::max)
    }
}

/// `T'[v](w) = ∫₀ᵀ Z·w(X) dt` with `q`-point Gauss rules per segment.
pub fn gateaux_derivative_with(adj: &AdjointTrajectory, w: &dyn Perturbation, q: usize) -> f64 {
    adj.nodes(q)
        .iter()
        .map(|n| n.weight * n.z.dot(&w.eval(n.element, &n.x, n.t)))
        .sum()
}

pub fn gateaux_derivative(adj: &AdjointTrajectory, w: &dyn Perturbation) -> f64 {
    gateaux_derivative_with(adj, w, DEFAULT_QUADRATURE)
}

/// Derivative of the travel time of the Darcy velocity in direction `w`:
/// both the path field and `w` are divided by the porosity. `adj` must be
/// built from the transport field.
pub fn transport_chain(
    adj: &AdjointTrajectory,
    w: &dyn Perturbation,
    mesh: &Mesh,
    problem: &ProblemSpec,
) -> Result<f64, FemError> {
    let mut sum = 0.0;
    for n in adj.nodes(DEFAULT_QUADRATURE) {
        let phi = problem.porosity(mesh.region(n.element))?;
        sum += n.weight * n.z.dot(&w.eval(n.element, &n.x, n.t)) / phi;
    }
    Ok(sum)
}
