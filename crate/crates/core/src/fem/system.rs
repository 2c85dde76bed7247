use std::sync::{Arc, OnceLock};

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;

use super::{FemError, MixedSolution, MixedSpace, ProblemSpec};
use crate::mesh::BoundaryKind;
use crate::quadrature::{gauss_legendre, TriangleRule};

/// Compressed sparse column matrix with summed duplicates.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Duplicates are summed in insertion order, so entries `(i,j)` and
    /// `(j,i)` written in the same order produce bitwise equal sums.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (c, r));
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        Self {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.col_ptr[c]..self.col_ptr[c + 1];
        match self.row_idx[range.clone()].binary_search(&r) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.values[k] * x[c];
            }
        }
        y
    }

    /// `max |M_ij - M_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for c in 0..self.n {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[k];
                worst = worst.max((self.values[k] - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Rows without any non-zero entry.
    pub fn zero_rows(&self) -> Vec<usize> {
        let mut has = vec![false; self.n];
        for (k, &r) in self.row_idx.iter().enumerate() {
            if self.values[k] != 0.0 {
                has[r] = true;
            }
        }
        (0..self.n).filter(|&r| !has[r]).collect()
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>, FemError> {
        let mut trip = Vec::with_capacity(self.values.len());
        for c in 0..self.n {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                trip.push(Triplet::new(self.row_idx[k], c, self.values[k]));
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &trip)
            .map_err(|e| FemError::Singular(format!("sparse matrix creation failed: {e:?}")))
    }
}

/// Assembled saddle-point system on the free (unconstrained) unknowns:
/// free velocity DOFs first, then all pressure DOFs.
pub struct SaddleSystem {
    pub space: Arc<MixedSpace>,
    pub matrix: CscMatrix,
    pub rhs: Vec<f64>,
    /// System row of each velocity DOF, `None` when constrained.
    pub velocity_row: Vec<Option<usize>>,
    pub n_free_velocity: usize,
    factor: OnceLock<Arc<Lu<usize, f64>>>,
}

impl std::fmt::Debug for SaddleSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SaddleSystem")
            .field("n", &self.matrix.n)
            .field("nnz", &self.matrix.values.len())
            .field("factorized", &self.factor.get().is_some())
            .finish()
    }
}

/// Volume rule used by assembly and residual evaluation for a given space.
pub(crate) fn volume_rule(space: &MixedSpace) -> TriangleRule {
    TriangleRule::with_degree(2 * space.velocity_degree() + 4)
}

/// Gauss points on `[-1, 1]` used for boundary data.
pub(crate) fn face_rule(space: &MixedSpace) -> (Vec<f64>, Vec<f64>) {
    gauss_legendre(space.velocity_degree() + 4)
}

pub fn assemble(space: &Arc<MixedSpace>, problem: &ProblemSpec) -> Result<SaddleSystem, FemError> {
    let mesh = space.mesh();
    let mut velocity_row = vec![None; space.n_velocity()];
    let mut next = 0;
    for (d, &c) in space.constrained().iter().enumerate() {
        if !c {
            velocity_row[d] = Some(next);
            next += 1;
        }
    }
    let n_free = next;
    let n = n_free + space.n_pressure();
    let rule = volume_rule(space);
    let nl = space.local_velocity_dofs();
    let np = space.local_pressure_dofs();
    let mut trip = Vec::with_capacity(mesh.num_elements() * (nl * nl + 2 * nl * np));
    let mut rhs = vec![0.0; n];

    for e in 0..mesh.num_elements() {
        let mat = problem.material(mesh.region(e))?;
        let kinv = mat
            .conductivity
            .try_inverse()
            .ok_or_else(|| FemError::InvalidMaterial {
                region: mesh.region(e),
                reason: "conductivity not invertible".into(),
            })?;
        let mut a_loc = vec![0.0; nl * nl];
        let mut b_loc = vec![0.0; nl * np];
        let mut f_loc = vec![0.0; np];
        for (x, w) in rule.on_triangle(&mesh.element_vertices(e)) {
            let phi = space.velocity_basis(e, &x);
            let grads = space.velocity_basis_gradients(e, &x);
            let pi = space.pressure_basis(e, &x);
            let f = problem.source.eval(&x);
            for i in 0..nl {
                let kp = kinv * phi[i];
                for j in i..nl {
                    a_loc[i * nl + j] += w * kp.dot(&phi[j]);
                }
                let div = grads[i].trace();
                for (m, &p) in pi.iter().enumerate() {
                    b_loc[i * np + m] -= w * p * div;
                }
            }
            for (m, &p) in pi.iter().enumerate() {
                f_loc[m] -= w * f * p;
            }
        }
        let vd = space.velocity_dofs(e);
        let pd = space.pressure_dofs(e);
        for i in 0..nl {
            let Some(ri) = velocity_row[vd[i]] else { continue };
            for j in i..nl {
                let Some(rj) = velocity_row[vd[j]] else { continue };
                let v = a_loc[i * nl + j];
                trip.push((ri, rj, v));
                if ri != rj {
                    trip.push((rj, ri, v));
                }
            }
            for (m, pdof) in pd.clone().enumerate() {
                let v = b_loc[i * np + m];
                trip.push((ri, n_free + pdof, v));
                trip.push((n_free + pdof, ri, v));
            }
        }
        for (m, pdof) in pd.enumerate() {
            rhs[n_free + pdof] += f_loc[m];
        }
    }

    let (gx, gw) = face_rule(space);
    for (fi, face) in mesh.faces().iter().enumerate() {
        if face.boundary != Some(BoundaryKind::Dirichlet) {
            continue;
        }
        let e = face.left;
        let g = mesh.face_geometry(fi);
        let vd = space.velocity_dofs(e);
        for (s, w) in gx.iter().zip(&gw) {
            let x = g.endpoints[0] * (0.5 * (1.0 - s)) + g.endpoints[1] * (0.5 * (1.0 + s));
            let gd = problem.dirichlet.eval(&x);
            let phi = space.velocity_basis(e, &x);
            let ds = 0.5 * w * g.length;
            for (i, p) in phi.iter().enumerate() {
                if let Some(r) = velocity_row[vd[i]] {
                    rhs[r] -= ds * p.dot(&g.normal) * gd;
                }
            }
        }
    }

    Ok(SaddleSystem {
        space: space.clone(),
        matrix: CscMatrix::from_triplets(n, trip),
        rhs,
        velocity_row,
        n_free_velocity: n_free,
        factor: OnceLock::new(),
    })
}

impl SaddleSystem {
    pub fn dim(&self) -> usize {
        self.matrix.n
    }

    /// Factorises on first use; later calls reuse the factorization.
    pub fn factorization(&self) -> Result<Arc<Lu<usize, f64>>, FemError> {
        if let Some(f) = self.factor.get() {
            return Ok(f.clone());
        }
        let zero = self.matrix.zero_rows();
        if let Some(&r) = zero.first() {
            return Err(FemError::Singular(format!(
                "{} zero row(s), first at row {r}",
                zero.len()
            )));
        }
        let lu = self
            .matrix
            .to_faer()?
            .sp_lu()
            .map_err(|e| FemError::Singular(format!("LU factorization failed: {e:?}")))?;
        let lu = Arc::new(lu);
        let _ = self.factor.set(lu.clone());
        Ok(lu)
    }

    /// Solves `M x = rhs` in system numbering, checking the relative residual.
    pub fn solve_raw(&self, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        if rhs.len() != self.dim() {
            return Err(FemError::DimensionMismatch(format!(
                "rhs has {} entries, system has {}",
                rhs.len(),
                self.dim()
            )));
        }
        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return Ok(vec![0.0; self.dim()]);
        }
        let lu = self.factorization()?;
        let b = Col::from_fn(self.dim(), |i| rhs[i]);
        let x = lu.solve(&b);
        let x: Vec<f64> = (0..self.dim()).map(|i| x[i]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FemError::Singular("non-finite solution (zero pivot)".into()));
        }
        let ax = self.matrix.mul_vec(&x);
        let res = ax
            .iter()
            .zip(rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if res > 1e-10 * bnorm {
            return Err(FemError::Singular(format!(
                "relative residual {:e} exceeds 1e-10",
                res / bnorm
            )));
        }
        Ok(x)
    }

    /// Splits a system vector into (velocity with constrained zeros, pressure).
    pub fn expand(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let vel = self
            .velocity_row
            .iter()
            .map(|r| r.map_or(0.0, |r| x[r]))
            .collect();
        let pr = x[self.n_free_velocity..].to_vec();
        (vel, pr)
    }

    /// Restricts full coefficient vectors to system numbering.
    pub fn restrict(&self, velocity: &[f64], pressure: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (d, r) in self.velocity_row.iter().enumerate() {
            if let Some(r) = r {
                out[*r] = velocity[d];
            }
        }
        out[self.n_free_velocity..].copy_from_slice(pressure);
        out
    }

    /// Solves with a right-hand side given as full (velocity, pressure)
    /// vectors; constrained velocity entries are ignored.
    pub fn solve_with(&self, velocity_rhs: &[f64], pressure_rhs: &[f64]) -> Result<MixedSolution, FemError> {
        let rhs = self.restrict(velocity_rhs, pressure_rhs);
        let x = self.solve_raw(&rhs)?;
        let (v, p) = self.expand(&x);
        Ok(MixedSolution::new(self.space.clone(), v, p))
    }
}

/// Direct sparse solve of the assembled system.
pub fn solve(system: &SaddleSystem) -> Result<MixedSolution, FemError> {
    let x = system.solve_raw(&system.rhs)?;
    let (v, p) = system.expand(&x);
    Ok(MixedSolution::new(system.space.clone(), v, p))
}
