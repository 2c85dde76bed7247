//! BDM velocity × discontinuous pressure spaces.
//!
//! The local velocity basis on each element is built directly in physical
//! (shifted and scaled) coordinates: `BDM_r(κ) = [P_r(κ)]²` is affine
//! invariant, so inverting the matrix of degrees of freedom evaluated on vector
//! monomials gives the nodal basis without a Piola map.
//!
//! Degrees of freedom of `BDM_r`:
//! * per face `F`, the normal moments `|F|⁻¹ ∫_F v·n_F L_j(s) ds`, `j = 0..=r`,
//!   with the face's global normal and Legendre polynomials in the face
//!   parameter `s ∈ [-1, 1]` running from `vertices[0]` to `vertices[1]`;
//! * per element, the moments `|κ|⁻¹ ∫_κ v·q` against the first-kind Nédélec
//!   space `N_{r-1} = [P_{r-2}]² ⊕ (-η, ξ) P̃_{r-2}`.
//!
//! Shared faces use the same functionals from both sides, so the normal trace
//! is continuous across faces.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::FemError;
use crate::mesh::{BoundaryKind, Mesh};
use crate::quadrature::{gauss_legendre, legendre_values, TriangleRule};
use crate::{Matrix2, Point, Vector2};

/// Exponent pairs `(p, q)` with `p + q ≤ deg`, graded by total degree.
pub fn monomial_exponents(deg: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for total in 0..=deg {
        for q in 0..=total {
            out.push((total - q, q));
        }
    }
    out
}

/// Values and first derivatives of scaled monomials at `ξ`.
fn monomials(exps: &[(usize, usize)], xi: &Point) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut v = Vec::with_capacity(exps.len());
    let mut dx = Vec::with_capacity(exps.len());
    let mut dy = Vec::with_capacity(exps.len());
    for &(p, q) in exps {
        let xp = xi.x.powi(p as i32);
        let yq = xi.y.powi(q as i32);
        v.push(xp * yq);
        dx.push(if p > 0 { p as f64 * xi.x.powi(p as i32 - 1) * yq } else { 0.0 });
        dy.push(if q > 0 { q as f64 * xp * xi.y.powi(q as i32 - 1) } else { 0.0 });
    }
    (v, dx, dy)
}

/// Number of interior moments of `BDM_r` on a triangle.
fn interior_count(r: usize) -> usize {
    if r < 2 {
        0
    } else {
        // dim [P_{r-2}]² + dim P̃_{r-2}
        (r - 1) * r + (r - 1)
    }
}

/// Test functions of the interior moments, in scaled coordinates.
fn interior_test_functions(r: usize, xi: &Point) -> Vec<Vector2<f64>> {
    if r < 2 {
        return Vec::new();
    }
    let exps = monomial_exponents(r - 2);
    let (v, _, _) = monomials(&exps, xi);
    let mut out = Vec::with_capacity(interior_count(r));
    for &m in &v {
        out.push(Vector2::new(m, 0.0));
    }
    for &m in &v {
        out.push(Vector2::new(0.0, m));
    }
    for (i, &(p, q)) in exps.iter().enumerate() {
        if p + q == r - 2 {
            out.push(Vector2::new(-xi.y, xi.x) * v[i]);
        }
    }
    out
}

/// Local basis of one element: `φ_i(x) = Σ_m C[m,i] ψ_m(ξ) e_x + C[M+m,i] ψ_m(ξ) e_y`
/// with `ξ = (x - center)/scale`.
#[derive(Clone, Debug)]
pub struct LocalBasis {
    pub center: Point,
    pub scale: f64,
    coeffs: DMatrix<f64>,
}

/// Velocity and pressure degrees of freedom for `V_{h,k} × Π_{h,k}`, i.e.
/// `BDM_{k+1}` velocity and discontinuous `P_k` pressure.
#[derive(Debug)]
pub struct MixedSpace {
    mesh: Arc<Mesh>,
    order: usize,
    velocity_exps: Vec<(usize, usize)>,
    pressure_exps: Vec<(usize, usize)>,
    constrained: Vec<bool>,
    locals: Vec<LocalBasis>,
}

/// Highest supported pressure order.
pub const MAX_ORDER: usize = 2;

impl MixedSpace {
    pub fn new(mesh: Arc<Mesh>, order: usize) -> Result<Self, FemError> {
        if order > MAX_ORDER {
            return Err(FemError::UnsupportedOrder(order));
        }
        let r = order + 1;
        let velocity_exps = monomial_exponents(r);
        let pressure_exps = monomial_exponents(order);
        let per_face = r + 1;
        let n_vel = mesh.num_faces() * per_face + mesh.num_elements() * interior_count(r);
        let mut constrained = vec![false; n_vel];
        for (f, face) in mesh.faces().iter().enumerate() {
            if face.boundary == Some(BoundaryKind::Neumann) {
                for j in 0..per_face {
                    constrained[f * per_face + j] = true;
                }
            }
        }
        let mut space = Self {
            mesh,
            order,
            velocity_exps,
            pressure_exps,
            constrained,
            locals: Vec::new(),
        };
        let locals = (0..space.mesh.num_elements())
            .map(|e| space.build_local(e))
            .collect::<Result<Vec<_>, _>>()?;
        space.locals = locals;
        Ok(space)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Pressure order `k`; the velocity degree is `k + 1`.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn velocity_degree(&self) -> usize {
        self.order + 1
    }

    pub fn dofs_per_face(&self) -> usize {
        self.order + 2
    }

    pub fn interior_dofs_per_element(&self) -> usize {
        interior_count(self.order + 1)
    }

    pub fn local_velocity_dofs(&self) -> usize {
        3 * self.dofs_per_face() + self.interior_dofs_per_element()
    }

    pub fn local_pressure_dofs(&self) -> usize {
        self.pressure_exps.len()
    }

    pub fn n_velocity(&self) -> usize {
        self.constrained.len()
    }

    pub fn n_pressure(&self) -> usize {
        self.mesh.num_elements() * self.local_pressure_dofs()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_velocity() + self.n_pressure()
    }

    /// Velocity DOFs fixed to zero by the no-flow condition.
    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    /// Velocity DOFs that are solved for (not on Neumann faces).
    pub fn n_free_velocity(&self) -> usize {
        self.constrained.iter().filter(|&&c| !c).count()
    }

    /// Global velocity DOF indices of element `e`, in local order
    /// (face 0 moments, face 1, face 2, interior).
    pub fn velocity_dofs(&self, e: usize) -> Vec<usize> {
        let per_face = self.dofs_per_face();
        let n_int = self.interior_dofs_per_element();
        let base_int = self.mesh.num_faces() * per_face;
        let mut out = Vec::with_capacity(self.local_velocity_dofs());
        for f in self.mesh.element_faces(e) {
            out.extend((0..per_face).map(|j| f * per_face + j));
        }
        out.extend((0..n_int).map(|m| base_int + e * n_int + m));
        out
    }

    pub fn pressure_dofs(&self, e: usize) -> std::ops::Range<usize> {
        let n = self.local_pressure_dofs();
        e * n..(e + 1) * n
    }

    pub fn local_basis(&self, e: usize) -> &LocalBasis {
        &self.locals[e]
    }

    fn to_local(&self, e: usize, x: &Point) -> Point {
        let l = &self.locals[e];
        (x - l.center) / l.scale
    }

    /// Values of all local velocity basis functions of `e` at `x`.
    pub fn velocity_basis(&self, e: usize, x: &Point) -> Vec<Vector2<f64>> {
        let xi = self.to_local(e, x);
        let (psi, _, _) = monomials(&self.velocity_exps, &xi);
        let c = &self.locals[e].coeffs;
        let nm = psi.len();
        (0..c.ncols())
            .map(|i| {
                let mut v = Vector2::zeros();
                for (m, &p) in psi.iter().enumerate() {
                    v.x += c[(m, i)] * p;
                    v.y += c[(nm + m, i)] * p;
                }
                v
            })
            .collect()
    }

    /// Gradients `∂(φ_i)_a/∂x_b` of all local velocity basis functions.
    pub fn velocity_basis_gradients(&self, e: usize, x: &Point) -> Vec<Matrix2<f64>> {
        let xi = self.to_local(e, x);
        let (_, dx, dy) = monomials(&self.velocity_exps, &xi);
        let l = &self.locals[e];
        let c = &l.coeffs;
        let nm = dx.len();
        let inv = 1.0 / l.scale;
        (0..c.ncols())
            .map(|i| {
                let mut g = Matrix2::zeros();
                for m in 0..nm {
                    g[(0, 0)] += c[(m, i)] * dx[m];
                    g[(0, 1)] += c[(m, i)] * dy[m];
                    g[(1, 0)] += c[(nm + m, i)] * dx[m];
                    g[(1, 1)] += c[(nm + m, i)] * dy[m];
                }
                g * inv
            })
            .collect()
    }

    pub fn pressure_basis(&self, e: usize, x: &Point) -> Vec<f64> {
        let xi = self.to_local(e, x);
        monomials(&self.pressure_exps, &xi).0
    }

    pub fn pressure_basis_gradients(&self, e: usize, x: &Point) -> Vec<Vector2<f64>> {
        let xi = self.to_local(e, x);
        let (_, dx, dy) = monomials(&self.pressure_exps, &xi);
        let inv = 1.0 / self.locals[e].scale;
        dx.iter().zip(&dy).map(|(&a, &b)| Vector2::new(a, b) * inv).collect()
    }

    /// Applies the velocity degrees of freedom of this space to a function
    /// given element by element. Face moments are taken from the face's left
    /// element. Constrained DOFs are not zeroed.
    pub fn interpolate_velocity<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(usize, &Point) -> Vector2<f64>,
    {
        let r = self.velocity_degree();
        let per_face = self.dofs_per_face();
        let mut out = vec![0.0; self.n_velocity()];
        let (gx, gw) = gauss_legendre(r + 3);
        for (fi, face) in self.mesh.faces().iter().enumerate() {
            let g = self.mesh.face_geometry(fi);
            for (s, w) in gx.iter().zip(&gw) {
                let x = g.endpoints[0] * (0.5 * (1.0 - s)) + g.endpoints[1] * (0.5 * (1.0 + s));
                let vn = f(face.left, &x).dot(&g.normal);
                let leg = legendre_values(r, *s);
                for j in 0..per_face {
                    out[fi * per_face + j] += 0.5 * w * vn * leg[j];
                }
            }
        }
        let n_int = self.interior_dofs_per_element();
        if n_int > 0 {
            let rule = TriangleRule::with_degree(2 * r + 2);
            let base = self.mesh.num_faces() * per_face;
            for e in 0..self.mesh.num_elements() {
                let area = self.mesh.area(e);
                for (x, w) in rule.on_triangle(&self.mesh.element_vertices(e)) {
                    let v = f(e, &x);
                    let q = interior_test_functions(r, &self.to_local(e, &x));
                    for (m, qm) in q.iter().enumerate() {
                        out[base + e * n_int + m] += w * v.dot(qm) / area;
                    }
                }
            }
        }
        out
    }

    fn build_local(&self, e: usize) -> Result<LocalBasis, FemError> {
        let mesh = &self.mesh;
        let r = self.velocity_degree();
        let verts = mesh.element_vertices(e);
        let center = mesh.centroid(e);
        let scale = mesh.diameter(e);
        let nm = self.velocity_exps.len();
        let n = 2 * nm;
        let to_local = |x: &Point| (x - center) / scale;
        let mut vand = DMatrix::<f64>::zeros(n, n);
        let (gx, gw) = gauss_legendre(r + 2);
        let per_face = r + 1;
        for (i, &f) in mesh.element_faces(e).iter().enumerate() {
            let g = mesh.face_geometry(f);
            for (s, w) in gx.iter().zip(&gw) {
                let x = g.endpoints[0] * (0.5 * (1.0 - s)) + g.endpoints[1] * (0.5 * (1.0 + s));
                let (psi, _, _) = monomials(&self.velocity_exps, &to_local(&x));
                let leg = legendre_values(r, *s);
                for j in 0..per_face {
                    let row = i * per_face + j;
                    let c = 0.5 * w * leg[j];
                    for (m, &p) in psi.iter().enumerate() {
                        vand[(row, m)] += c * p * g.normal.x;
                        vand[(row, nm + m)] += c * p * g.normal.y;
                    }
                }
            }
        }
        if interior_count(r) > 0 {
            let rule = TriangleRule::with_degree(2 * r);
            let area = mesh.area(e);
            for (x, w) in rule.on_triangle(&verts) {
                let xi = to_local(&x);
                let (psi, _, _) = monomials(&self.velocity_exps, &xi);
                for (k, q) in interior_test_functions(r, &xi).iter().enumerate() {
                    let row = 3 * per_face + k;
                    for (m, &p) in psi.iter().enumerate() {
                        vand[(row, m)] += w * p * q.x / area;
                        vand[(row, nm + m)] += w * p * q.y / area;
                    }
                }
            }
        }
        let coeffs = vand
            .try_inverse()
            .ok_or(FemError::DegenerateElement(e))?;
        Ok(LocalBasis {
            center,
            scale,
            coeffs,
        })
    }

    /// Coefficient vector of element `e`'s local velocity from a global vector.
    pub fn gather_velocity(&self, e: usize, global: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.local_velocity_dofs(),
            self.velocity_dofs(e).into_iter().map(|d| global[d]),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{refine, unit_square, BoundaryKind, MarkedSet};

    fn square() -> Arc<Mesh> {
        Arc::new(unit_square(BoundaryKind::Dirichlet))
    }

    #[test]
    fn dof_counts() {
        let s0 = MixedSpace::new(square(), 0).unwrap();
        assert_eq!(s0.n_velocity(), 10);
        assert_eq!(s0.n_pressure(), 2);
        let s1 = MixedSpace::new(square(), 1).unwrap();
        assert_eq!(s1.n_velocity(), 5 * 3 + 2 * 3);
        assert_eq!(s1.n_pressure(), 6);
        assert!(matches!(
            MixedSpace::new(square(), 3),
            Err(FemError::UnsupportedOrder(3))
        ));
    }

    #[test]
    fn basis_is_dual_to_functionals() {
        let m = Arc::new(refine(&square(), &MarkedSet::all(&square())));
        for k in 0..=2 {
            let space = MixedSpace::new(m.clone(), k).unwrap();
            for e in 0..m.num_elements() {
                let dofs = space.velocity_dofs(e);
                for (i, &d) in dofs.iter().enumerate() {
                    let coeffs = space.interpolate_velocity(|el, x| {
                        // element-local evaluation of the i-th basis of e,
                        // extended by zero elsewhere is not H(div); only check
                        // functionals that live on e.
                        if el == e {
                            space.velocity_basis(e, x)[i]
                        } else {
                            Vector2::zeros()
                        }
                    });
                    for (j, &dj) in dofs.iter().enumerate() {
                        let face_dof = j < 3 * space.dofs_per_face();
                        let face = m.element_faces(e)[j.min(3 * space.dofs_per_face() - 1)
                            / space.dofs_per_face()];
                        if face_dof && m.face(face).left != e {
                            continue;
                        }
                        let expected = if dj == d { 1.0 } else { 0.0 };
                        assert!(
                            (coeffs[dj] - expected).abs() < 1e-11,
                            "k={k} e={e} i={i} j={j}: {}",
                            coeffs[dj]
                        );
                    }
                }
            }
        }
    }
}
