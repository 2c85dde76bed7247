//! Particle trajectories of a velocity field through a triangulation.
//!
//! Linear per-element fields are advanced with their exact flow map; other
//! fields use an embedded Runge–Kutta method. In both cases the exit time from
//! an element is the first sign change of an edge's signed distance, located
//! on a time grid and polished by safeguarded root finding.

use std::fmt;
use std::sync::Arc;

use nalgebra::SVector;
use thiserror::Error;

use crate::expm::AffineField;
use crate::fem::{FemError, MixedSolution, ProblemSpec};
use crate::mesh::{Mesh, MeshError};
use crate::ode::{dopri_step, Dopri5, StepRecord, Tolerances};
use crate::{Matrix2, Point, Vector2};

pub type VectorFn = Arc<dyn Fn(&Point, f64) -> Vector2<f64> + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&Point, f64) -> Matrix2<f64> + Send + Sync>;

/// Relative time tolerance of crossing times.
pub const ROOT_TOL: f64 = 1e-13;
/// Relative (to element size) distance below which an exit counts as a vertex exit.
pub const VERTEX_TOL: f64 = 1e-10;
/// `|u·n| ≤ TANGENT_TOL |u|` counts as a tangential crossing.
pub const TANGENT_TOL: f64 = 1e-12;
/// Speed at the release point below this fraction of the field scale is stagnation.
pub const STAGNATION_TOL: f64 = 1e-14;

/// Smooth field given by closures for `u(x, t)` and `∇u(x, t)`
/// (rows are components, columns derivatives).
#[derive(Clone)]
pub struct AnalyticField {
    pub velocity: VectorFn,
    pub gradient: GradientFn,
    pub time_dependent: bool,
}

/// Piecewise polynomial field `u_h / φ` of a mixed solution.
#[derive(Clone, Debug)]
pub struct DiscreteField {
    pub solution: MixedSolution,
    /// Divisor per element.
    pub porosity: Vec<f64>,
}

#[derive(Clone)]
pub enum VelocityField {
    Analytic(AnalyticField),
    Discrete(DiscreteField),
}

impl fmt::Debug for VelocityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VelocityField::Analytic(a) => write!(f, "Analytic(time_dependent: {})", a.time_dependent),
            VelocityField::Discrete(d) => write!(f, "Discrete(order {})", d.solution.space.order()),
        }
    }
}

impl VelocityField {
    pub fn analytic(
        velocity: impl Fn(&Point) -> Vector2<f64> + Send + Sync + 'static,
        gradient: impl Fn(&Point) -> Matrix2<f64> + Send + Sync + 'static,
    ) -> Self {
        VelocityField::Analytic(AnalyticField {
            velocity: Arc::new(move |x, _| velocity(x)),
            gradient: Arc::new(move |x, _| gradient(x)),
            time_dependent: false,
        })
    }

    pub fn unsteady(
        velocity: impl Fn(&Point, f64) -> Vector2<f64> + Send + Sync + 'static,
        gradient: impl Fn(&Point, f64) -> Matrix2<f64> + Send + Sync + 'static,
    ) -> Self {
        VelocityField::Analytic(AnalyticField {
            velocity: Arc::new(velocity),
            gradient: Arc::new(gradient),
            time_dependent: true,
        })
    }

    /// Discrete field `u_h / φ` with one divisor per element.
    pub fn discrete(solution: MixedSolution, porosity: Vec<f64>) -> Self {
        assert_eq!(porosity.len(), solution.mesh().num_elements());
        VelocityField::Discrete(DiscreteField { solution, porosity })
    }

    /// Value of the field as seen from element `e` (for discrete fields the
    /// element polynomial, also outside the element).
    pub fn eval(&self, e: usize, x: &Point, t: f64) -> Vector2<f64> {
        match self {
            VelocityField::Analytic(a) => (a.velocity)(x, t),
            VelocityField::Discrete(d) => d.solution.velocity_polynomial(e, x) / d.porosity[e],
        }
    }

    pub fn gradient(&self, e: usize, x: &Point, t: f64) -> Matrix2<f64> {
        match self {
            VelocityField::Analytic(a) => (a.gradient)(x, t),
            VelocityField::Discrete(d) => d.solution.velocity_polynomial_gradient(e, x) / d.porosity[e],
        }
    }

    /// Exact affine representation on element `e`, if the field is linear there.
    pub fn affine(&self, e: usize) -> Option<AffineField> {
        match self {
            VelocityField::Analytic(_) => None,
            VelocityField::Discrete(d) => d.solution.affine_coefficients(e).map(|f| AffineField {
                a: f.a / d.porosity[e],
                g: f.g / d.porosity[e],
                center: f.center,
            }),
        }
    }

    /// Largest speed over element vertices and centroids (at t = 0).
    pub fn scale(&self, mesh: &Mesh) -> f64 {
        let mut s = 0.0f64;
        for e in 0..mesh.num_elements() {
            let v = mesh.element_vertices(e);
            for x in v.iter().chain(std::iter::once(&mesh.centroid(e))) {
                s = s.max(self.eval(e, x, 0.0).norm());
            }
        }
        s
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, VelocityField::Analytic(_))
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, VelocityField::Analytic(a) if a.time_dependent)
    }
}

/// Transport velocity `u_h / φ` with the porosity of each element's region.
pub fn transport_field(sol: &MixedSolution, problem: &ProblemSpec) -> Result<VelocityField, FemError> {
    let mesh = sol.mesh();
    let porosity = (0..mesh.num_elements())
        .map(|e| problem.porosity(mesh.region(e)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VelocityField::discrete(sol.clone(), porosity))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crossing {
    /// Interior face into the neighbouring element.
    Face(usize),
    /// Boundary face where the trajectory leaves the domain.
    Boundary(usize),
}

impl Crossing {
    pub fn face(&self) -> usize {
        match *self {
            Crossing::Face(f) | Crossing::Boundary(f) => f,
        }
    }
}

/// In-element motion, kept so the path can be re-evaluated at any time.
#[derive(Clone, Debug)]
pub enum SegmentPath {
    Affine(AffineField),
    Steps(Vec<StepRecord<2>>),
}

#[derive(Clone, Debug)]
pub struct Segment {
    pub element: usize,
    pub t0: f64,
    pub t1: f64,
    pub entry: Point,
    pub exit: Point,
    pub crossing: Crossing,
    /// Outward unit normal of `element` on the crossed face.
    pub normal: Vector2<f64>,
    pub path: SegmentPath,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
    pub travel_time: f64,
    pub exit_normal: Vector2<f64>,
    pub exit_velocity: Vector2<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("release point ({0}, {1}) is not strictly inside the domain")]
    NotInterior(f64, f64),
    #[error("stagnation: speed {speed:e} at the release point (field scale {scale:e})")]
    Stagnation { speed: f64, scale: f64 },
    #[error("time budget exceeded at t = {t:e} without leaving the domain")]
    BudgetExceeded { t: f64 },
    #[error("trajectory passes through a vertex of face {face} (element {element})")]
    VertexExit { face: usize, element: usize },
    #[error("trajectory crosses face {face} tangentially (|u·n|/|u| = {ratio:e})")]
    TangentialExit { face: usize, ratio: f64 },
    #[error("velocity on the far side of face {face} points back into element {element}")]
    FaceReversal { face: usize, element: usize },
    #[error("integration step underflow in element {element} at t = {t:e}")]
    StepUnderflow { element: usize, t: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

impl TraceError {
    /// Violations of the crossing hypotheses (as opposed to numerical failure).
    pub fn is_assumption_violation(&self) -> bool {
        matches!(
            self,
            TraceError::VertexExit { .. } | TraceError::TangentialExit { .. } | TraceError::FaceReversal { .. }
        )
    }
}

/// Result of advancing inside one element.
#[derive(Clone, Debug, PartialEq)]
pub enum Propagation {
    /// Leaves through local edge `edge` (from vertex `edge` to `edge + 1`)
    /// after `time`, at `point` (on the edge).
    Exit { point: Point, time: f64, edge: usize },
    /// Velocity vanishes inside the element.
    Stagnation,
    /// No crossing before the time cap (recirculation or a sink).
    NoExit,
    /// The flow leaves immediately through an edge it sits on.
    Outflow { edge: usize },
}

/// Signed distances to the three edges, positive inside, and inward normals.
struct EdgeFrame {
    p: [Point; 3],
    inward: [Vector2<f64>; 3],
    h: f64,
}

impl EdgeFrame {
    fn new(p: [Point; 3]) -> Self {
        let mut inward = [Vector2::zeros(); 3];
        let mut len = [0.0; 3];
        for i in 0..3 {
            let d = p[(i + 1) % 3] - p[i];
            len[i] = d.norm();
            inward[i] = Vector2::new(-d.y, d.x) / len[i];
        }
        let h = len.iter().cloned().fold(0.0, f64::max);
        Self { p, inward, h }
    }

    fn distances(&self, x: &Point) -> [f64; 3] {
        [0, 1, 2].map(|i| self.inward[i].dot(&(x - self.p[i])))
    }

    /// Projects `x` onto edge `i`; returns the point and its edge parameter.
    fn project(&self, i: usize, x: &Point) -> (Point, f64) {
        let a = self.p[i];
        let d = self.p[(i + 1) % 3] - a;
        let s = ((x - a).dot(&d) / (d.norm_squared())).clamp(0.0, 1.0);
        (a + d * s, s)
    }
}

/// Safeguarded false position (Illinois) on a bracket with `g(a) > 0 ≥ g(b)`.
fn find_root(g: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64, mut gb: f64) -> f64 {
    let tol = ROOT_TOL * b.abs().max(f64::MIN_POSITIVE);
    let mut side = 0i8;
    for it in 0..300 {
        if (b - a).abs() <= tol {
            break;
        }
        let mut c = if it % 4 == 3 || ga == gb {
            0.5 * (a + b)
        } else {
            b - gb * (b - a) / (gb - ga)
        };
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let gc = g(c);
        if gc > 0.0 {
            a = c;
            ga = gc;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            gb = gc;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        }
    }
    b
}

/// Minimiser of `g` on `[a, b]` given `g'(a) < 0 < g'(b)`, by bisection on `g'`.
fn find_dip(dg: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        if (b - a).abs() <= ROOT_TOL * b.abs() {
            break;
        }
        let c = 0.5 * (a + b);
        if dg(c) < 0.0 {
            a = c;
        } else {
            b = c;
        }
    }
    0.5 * (a + b)
}

/// Scans one time step `[t0, t1]` for the earliest edge crossing.
/// `at(t)` returns the position and velocity at time `t`.
fn scan_step(
    frame: &EdgeFrame,
    at: &dyn Fn(f64) -> (Point, Vector2<f64>),
    t0: f64,
    t1: f64,
    d0: &[f64; 3],
    u0: &Vector2<f64>,
    d1: &[f64; 3],
    u1: &Vector2<f64>,
    on_edge: &[bool; 3],
) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for i in 0..3 {
        let g = |t: f64| frame.inward[i].dot(&(at(t).0 - frame.p[i]));
        let mut bracket = None;
        let start = if on_edge[i] { d0[i].max(0.0) } else { d0[i] };
        if start > 0.0 && d1[i] <= 0.0 {
            bracket = Some((t0, t1, start, d1[i]));
        } else if start > 0.0 && d1[i] > 0.0 {
            let s0 = frame.inward[i].dot(u0);
            let s1 = frame.inward[i].dot(u1);
            if s0 < 0.0 && s1 > 0.0 {
                let dg = |t: f64| frame.inward[i].dot(&at(t).1);
                let tm = find_dip(&dg, t0, t1);
                let gm = g(tm);
                if gm <= 0.0 {
                    bracket = Some((t0, tm, start, gm));
                }
            }
        }
        if let Some((a, b, ga, gb)) = bracket {
            let t = find_root(&g, a, b, ga, gb);
            if best.is_none_or(|(tb, _)| t < tb) {
                best = Some((t, i));
            }
        }
    }
    best
}

fn finish_exit(frame: &EdgeFrame, x: Point, t: f64, edge: usize) -> Propagation {
    let (point, _) = frame.project(edge, &x);
    Propagation::Exit { point, time: t, edge }
}

/// Edges the point sits on (distance within a relative tolerance).
fn edges_touched(frame: &EdgeFrame, d: &[f64; 3]) -> [bool; 3] {
    [0, 1, 2].map(|i| d[i].abs() <= 1e-12 * frame.h)
}

/// Exact in-element advance for `u(x) = a + G (x - c)`, starting at `entry`,
/// looking for a crossing within `t_cap`.
pub fn propagate_in_element(field: &AffineField, triangle: &[Point; 3], entry: &Point, t_cap: f64) -> Propagation {
    let frame = EdgeFrame::new(*triangle);
    let u_entry = field.velocity(entry);
    let speed = u_entry.norm();
    if speed == 0.0 {
        return Propagation::Stagnation;
    }
    let at = |t: f64| field.flow_with_velocity(entry, t);
    let d_entry = frame.distances(entry);
    let on_edge = edges_touched(&frame, &d_entry);
    for i in 0..3 {
        if on_edge[i] && frame.inward[i].dot(&u_entry) < 0.0 {
            return Propagation::Outflow { edge: i };
        }
    }
    let h = frame.h;
    let mut dt = 1e-3 * h / speed;
    let (mut t0, mut d0, mut u0) = (0.0, d_entry, u_entry);
    let mut first = true;
    let step_cap = 1_000_000;
    for _ in 0..step_cap {
        let s = u0.norm();
        if s == 0.0 {
            return Propagation::Stagnation;
        }
        let t1 = (t0 + dt.min(0.05 * h / s)).min(t_cap);
        let (x1, u1) = at(t1);
        let d1 = frame.distances(&x1);
        let touch = if first { on_edge } else { [false; 3] };
        if let Some((t, i)) = scan_step(&frame, &at, t0, t1, &d0, &u0, &d1, &u1, &touch) {
            return finish_exit(&frame, at(t).0, t, i);
        }
        if t1 >= t_cap {
            return Propagation::NoExit;
        }
        if u1.norm() <= 1e-300 {
            return Propagation::Stagnation;
        }
        first = false;
        (t0, d0, u0) = (t1, d1, u1);
        dt *= 2.0;
    }
    Propagation::NoExit
}

/// Runge–Kutta advance of a general field on element `e` from absolute time
/// `t_start`, returning the outcome and accepted steps (the last one cut at
/// the crossing).
fn propagate_general(
    field: &VelocityField,
    e: usize,
    triangle: &[Point; 3],
    entry: &Point,
    t_start: f64,
    t_cap: f64,
) -> Result<(Propagation, Vec<StepRecord<2>>), TraceError> {
    let frame = EdgeFrame::new(*triangle);
    let f = |t: f64, y: &SVector<f64, 2>| field.eval(e, y, t);
    let u_entry = f(t_start, entry);
    let speed = u_entry.norm();
    if speed == 0.0 {
        return Ok((Propagation::Stagnation, Vec::new()));
    }
    let d_entry = frame.distances(entry);
    let on_edge = edges_touched(&frame, &d_entry);
    for i in 0..3 {
        if on_edge[i] && frame.inward[i].dot(&u_entry) < 0.0 {
            return Ok((Propagation::Outflow { edge: i }, Vec::new()));
        }
    }
    let h = frame.h;
    let mut ode = Dopri5::new(f, t_start, *entry, 1e-3 * h / speed, Tolerances::default());
    let mut steps = Vec::new();
    let (mut d0, mut u0) = (d_entry, u_entry);
    let mut first = true;
    let t_end = t_start + t_cap;
    for _ in 0..1_000_000 {
        let s = u0.norm();
        if s == 0.0 {
            return Ok((Propagation::Stagnation, steps));
        }
        let h_max = (0.05 * h / s).min(t_end - ode.t);
        let rec = ode
            .advance(h_max)
            .map_err(|_| TraceError::StepUnderflow { element: e, t: ode.t })?;
        let at = |t: f64| {
            let x = dopri_step(ode.rhs(), rec.t0, &rec.y0, t - rec.t0).0;
            (x, field.eval(e, &x, t))
        };
        let u1 = field.eval(e, &rec.y1, rec.t1);
        let d1 = frame.distances(&rec.y1);
        let touch = if first { on_edge } else { [false; 3] };
        if let Some((t, i)) = scan_step(&frame, &at, rec.t0, rec.t1, &d0, &u0, &d1, &u1, &touch) {
            let x = at(t).0;
            let Propagation::Exit { point, time, edge } = finish_exit(&frame, x, t, i) else {
                unreachable!()
            };
            steps.push(StepRecord {
                t0: rec.t0,
                y0: rec.y0,
                t1: time,
                y1: point,
            });
            return Ok((
                Propagation::Exit {
                    point,
                    time: time - t_start,
                    edge,
                },
                steps,
            ));
        }
        steps.push(rec);
        if ode.t >= t_end {
            return Ok((Propagation::NoExit, steps));
        }
        first = false;
        (d0, u0) = (d1, u1);
    }
    Ok((Propagation::NoExit, steps))
}

/// Element in which tracing starts: the lowest-index element containing `x0`
/// into which the velocity points.
fn start_element(field: &VelocityField, mesh: &Mesh, x0: &Point) -> Result<usize, TraceError> {
    let e0 = mesh.locate_point(x0)?;
    let mut candidates: Vec<usize> = mesh.triangles()[e0]
        .iter()
        .flat_map(|&v| mesh.vertex_elements(v).iter().copied())
        .filter(|&c| mesh.contains(c, x0))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    for &c in &candidates {
        let frame = EdgeFrame::new(mesh.element_vertices(c));
        let d = frame.distances(x0);
        let u = field.eval(c, x0, 0.0);
        let ok = (0..3).all(|i| d[i] > 1e-12 * frame.h || frame.inward[i].dot(&u) > 0.0);
        if ok {
            return Ok(c);
        }
    }
    Ok(candidates[0])
}

/// Traces the pathline from `x0` until it leaves the domain.
pub fn trace(field: &VelocityField, mesh: &Mesh, x0: Point, t_max: f64) -> Result<Trajectory, TraceError> {
    let e0 = mesh.locate_point(&x0)?;
    // strictly interior: not on a boundary face
    for (fi, face) in mesh.faces().iter().enumerate() {
        if face.is_boundary() {
            let g = mesh.face_geometry(fi);
            let d = g.normal.dot(&(x0 - g.endpoints[0]));
            let s = (x0 - g.endpoints[0]).dot(&(g.endpoints[1] - g.endpoints[0])) / (g.length * g.length);
            if d.abs() <= 1e-12 * g.length && (-1e-12..=1.0 + 1e-12).contains(&s) {
                return Err(TraceError::NotInterior(x0.x, x0.y));
            }
        }
    }
    let _ = e0;
    let scale = field.scale(mesh);
    let mut e = start_element(field, mesh, &x0)?;
    let speed = field.eval(e, &x0, 0.0).norm();
    if speed < STAGNATION_TOL * scale || speed == 0.0 {
        return Err(TraceError::Stagnation { speed, scale });
    }

    let mut segments: Vec<Segment> = Vec::new();
    let mut t = 0.0;
    let mut x = x0;
    let max_segments = 100 * mesh.num_elements() + 1000;
    for _ in 0..max_segments {
        let tri = mesh.element_vertices(e);
        let remaining = t_max - t;
        if remaining <= 0.0 {
            return Err(TraceError::BudgetExceeded { t });
        }
        let (outcome, path) = match field.affine(e) {
            Some(aff) => (propagate_in_element(&aff, &tri, &x, remaining), SegmentPath::Affine(aff)),
            None => {
                let (o, steps) = propagate_general(field, e, &tri, &x, t, remaining)?;
                (o, SegmentPath::Steps(steps))
            }
        };
        let (point, dwell, edge) = match outcome {
            Propagation::Exit { point, time, edge } => (point, time, edge),
            Propagation::Stagnation | Propagation::NoExit => return Err(TraceError::BudgetExceeded { t: t_max }),
            Propagation::Outflow { edge } => {
                let face = mesh.element_faces(e)[edge];
                return Err(TraceError::FaceReversal { face, element: e });
            }
        };
        let face = mesh.element_faces(e)[edge];
        let g = mesh.face_geometry(face);
        let (pa, pb) = (g.endpoints[0], g.endpoints[1]);
        let h = mesh.diameter(e);
        if (point - pa).norm() <= VERTEX_TOL * h || (point - pb).norm() <= VERTEX_TOL * h {
            return Err(TraceError::VertexExit { face, element: e });
        }
        let normal = g.normal * mesh.face_sign(e, edge);
        let t_exit = t + dwell;
        let u_minus = field.eval(e, &point, t_exit);
        let ratio = u_minus.dot(&normal).abs() / u_minus.norm();
        if !(ratio > TANGENT_TOL) {
            return Err(TraceError::TangentialExit { face, ratio });
        }
        let next = mesh.neighbor(e, edge);
        let crossing = match next {
            None => Crossing::Boundary(face),
            Some(_) => Crossing::Face(face),
        };
        segments.push(Segment {
            element: e,
            t0: t,
            t1: t_exit,
            entry: x,
            exit: point,
            crossing,
            normal,
            path,
        });
        t = t_exit;
        x = point;
        if t > t_max {
            return Err(TraceError::BudgetExceeded { t });
        }
        match next {
            None => {
                return Ok(Trajectory {
                    segments,
                    travel_time: t,
                    exit_normal: normal,
                    exit_velocity: u_minus,
                });
            }
            Some(n) => {
                let u_plus = field.eval(n, &point, t);
                if u_plus.dot(&normal) <= TANGENT_TOL * u_plus.norm() {
                    return Err(TraceError::FaceReversal { face, element: n });
                }
                e = n;
            }
        }
    }
    Err(TraceError::BudgetExceeded { t })
}

impl Trajectory {
    /// Position at time `t` within segment `i`.
    pub fn position(&self, field: &VelocityField, i: usize, t: f64) -> Point {
        let seg = &self.segments[i];
        match &seg.path {
            SegmentPath::Affine(a) => a.flow(&seg.entry, t - seg.t0),
            SegmentPath::Steps(steps) => {
                let k = steps.partition_point(|s| s.t1 < t).min(steps.len() - 1);
                let s = &steps[k];
                let f = |tt: f64, y: &SVector<f64, 2>| field.eval(seg.element, y, tt);
                dopri_step(&f, s.t0, &s.y0, t - s.t0).0
            }
        }
    }

    /// Sampled polyline `(t, x, element)` with `per_segment` interior samples.
    pub fn samples(&self, field: &VelocityField, per_segment: usize) -> Vec<(f64, Point, usize)> {
        let mut out = Vec::new();
        for (i, seg) in self.segments.iter().enumerate() {
            out.push((seg.t0, seg.entry, seg.element));
            for j in 1..=per_segment {
                let t = seg.t0 + (seg.t1 - seg.t0) * j as f64 / (per_segment + 1) as f64;
                out.push((t, self.position(field, i, t), seg.element));
            }
        }
        if let Some(last) = self.segments.last() {
            out.push((last.t1, last.exit, last.element));
        }
        out
    }

    /// Elements crossed, in order.
    pub fn elements(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.element).collect()
    }

    pub fn exit_point(&self) -> Point {
        self.segments.last().map(|s| s.exit).unwrap_or_else(Point::zeros)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{unit_square, BoundaryKind};

    fn right_triangle() -> [Point; 3] {
        [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)]
    }

    #[test]
    fn constant_field_in_triangle() {
        let f = AffineField::new(Vector2::new(1.0, 0.0), Matrix2::zeros());
        let p = propagate_in_element(&f, &right_triangle(), &Point::new(0.0, 0.25), 10.0);
        let Propagation::Exit { point, time, edge } = p else { panic!("{p:?}") };
        assert_eq!(edge, 1);
        assert!((point - Point::new(0.75, 0.25)).norm() < 1e-13);
        assert!((time - 0.75).abs() < 1e-13);
    }

    #[test]
    fn separable_field_in_triangle() {
        let f = AffineField::new(Vector2::new(1.0, 0.0), Matrix2::new(1.0, 0.0, 0.0, 0.0));
        let p = propagate_in_element(&f, &right_triangle(), &Point::new(0.0, 0.25), 10.0);
        let Propagation::Exit { point, time, .. } = p else { panic!("{p:?}") };
        assert!((time - 0.75f64.ln_1p()).abs() < 1e-13 * time);
        assert!((point - Point::new(0.75, 0.25)).norm() < 1e-12);
    }

    #[test]
    fn rotation_never_exits() {
        let f = AffineField::new(Vector2::zeros(), Matrix2::new(0.0, -1.0, 1.0, 0.0));
        let tri = [Point::new(-1.0, -1.0), Point::new(1.0, -1.0), Point::new(0.0, 1.0)];
        let p = propagate_in_element(&f, &tri, &Point::new(0.1, 0.0), 50.0);
        assert_eq!(p, Propagation::NoExit);
        let p = propagate_in_element(&f, &tri, &Point::new(0.0, 0.0), 50.0);
        assert_eq!(p, Propagation::Stagnation);
    }

    #[test]
    fn uniform_advection_on_square() {
        let mesh = unit_square(BoundaryKind::Neumann);
        let field = VelocityField::analytic(|_| Vector2::new(1.0, 0.0), |_| Matrix2::zeros());
        let tr = trace(&field, &mesh, Point::new(0.25, 0.5), 10.0).unwrap();
        assert!((tr.travel_time - 0.75).abs() < 1e-12);
        assert!((tr.exit_point() - Point::new(1.0, 0.5)).norm() < 1e-12);
        assert_eq!(tr.exit_normal, Vector2::new(1.0, 0.0));
    }

    #[test]
    fn sink_exceeds_budget() {
        let mesh = unit_square(BoundaryKind::Neumann);
        let field = VelocityField::analytic(|x| -x, |_| -Matrix2::identity());
        let err = trace(&field, &mesh, Point::new(0.5, 0.25), 100.0).unwrap_err();
        assert!(matches!(err, TraceError::BudgetExceeded { .. }), "{err}");
    }

    #[test]
    fn boundary_release_is_rejected() {
        let mesh = unit_square(BoundaryKind::Neumann);
        let field = VelocityField::analytic(|_| Vector2::new(1.0, 0.0), |_| Matrix2::zeros());
        let err = trace(&field, &mesh, Point::new(0.0, 0.5), 10.0).unwrap_err();
        assert!(matches!(err, TraceError::NotInterior(..)));
    }
}
