//! Conforming triangular meshes.
//!
//! Element `e` has vertices `triangles[e] = [v0, v1, v2]` in counter-clockwise
//! order. Local edge `i` runs from `v_i` to `v_{(i+1) % 3}`; its global face is
//! `element_faces[e][i]`.
//!
//! A face stores its vertex pair in the orientation seen counter-clockwise by
//! its `left` element, so the face normal (the edge direction rotated
//! clockwise) points from `left` into `right`, or outward on the boundary.

mod refine;

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::Point;

pub use refine::{refine, try_refine};

/// Geometric tolerance on barycentric coordinates for inclusion tests.
pub const INSIDE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("triangle {element} references vertex {vertex} but only {count} vertices exist")]
    InvalidVertex {
        element: usize,
        vertex: usize,
        count: usize,
    },
    #[error("triangle {element} is inverted or degenerate (signed area {area:e})")]
    Inverted { element: usize, area: f64 },
    #[error("non-conforming mesh: {0}")]
    NonConforming(String),
    #[error("boundary face between vertices {0} and {1} has no tag")]
    UntaggedBoundary(usize, usize),
    #[error("point ({0}, {1}) lies outside the mesh")]
    PointOutside(f64, f64),
    #[error("indicator count {got} does not match element count {expected}")]
    IndicatorLength { got: usize, expected: usize },
    #[error("marking fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error("marked element {0} does not exist")]
    InvalidMarked(usize),
    #[error("region list has {got} entries for {expected} triangles")]
    RegionLength { got: usize, expected: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    /// Endpoints, counter-clockwise as seen from `left`.
    pub vertices: [usize; 2],
    pub left: usize,
    pub right: Option<usize>,
    pub boundary: Option<BoundaryKind>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

/// Geometry of a single face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceGeometry {
    pub normal: Point,
    pub length: f64,
    pub endpoints: [Point; 2],
}

/// Parent of a green (bisected) element, kept so the pair can be replaced by
/// its parent before any further refinement.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct GreenParent {
    pub triangle: [usize; 3],
    pub level: u32,
}

/// Elements selected for refinement.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MarkedSet {
    pub elements: BTreeSet<usize>,
}

impl MarkedSet {
    pub fn all(mesh: &Mesh) -> Self {
        Self {
            elements: (0..mesh.num_elements()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

impl FromIterator<usize> for MarkedSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        Self {
            elements: iter.into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    faces: Vec<Face>,
    element_faces: Vec<[usize; 3]>,
    element_region: Vec<usize>,
    refinement_level: Vec<u32>,
    parent: Vec<Option<usize>>,
    green: Vec<Option<GreenParent>>,
    /// Every edge midpoint ever created, keyed by the sorted endpoint pair.
    midpoints: HashMap<(usize, usize), usize>,
    vertex_elements: Vec<Vec<usize>>,
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn signed_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x))
}

/// Builds a mesh from raw connectivity, checking conformity and tagging every
/// boundary face by its midpoint.
pub fn build_mesh<F>(
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<usize>,
    boundary_tagger: F,
) -> Result<Mesh, MeshError>
where
    F: Fn(&Point) -> Option<BoundaryKind>,
{
    if regions.len() != triangles.len() {
        return Err(MeshError::RegionLength {
            got: regions.len(),
            expected: triangles.len(),
        });
    }
    let n = triangles.len();
    let mesh = Mesh::assemble(
        vertices,
        triangles,
        regions,
        vec![0; n],
        vec![None; n],
        vec![None; n],
        HashMap::new(),
        |mesh_vertices, a, b| {
            let mid = 0.5 * (mesh_vertices[a] + mesh_vertices[b]);
            boundary_tagger(&mid).ok_or(MeshError::UntaggedBoundary(a, b))
        },
    )?;
    mesh.check_hanging_nodes()?;
    mesh.check_topology()?;
    Ok(mesh)
}

impl Mesh {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble<T>(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        element_region: Vec<usize>,
        refinement_level: Vec<u32>,
        parent: Vec<Option<usize>>,
        green: Vec<Option<GreenParent>>,
        midpoints: HashMap<(usize, usize), usize>,
        tag: T,
    ) -> Result<Mesh, MeshError>
    where
        T: Fn(&[Point], usize, usize) -> Result<BoundaryKind, MeshError>,
    {
        let nv = vertices.len();
        for (e, t) in triangles.iter().enumerate() {
            for &v in t {
                if v >= nv {
                    return Err(MeshError::InvalidVertex {
                        element: e,
                        vertex: v,
                        count: nv,
                    });
                }
            }
            let area = signed_area(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]);
            if area <= 0.0 {
                return Err(MeshError::Inverted { element: e, area });
            }
        }

        let mut faces: Vec<Face> = Vec::with_capacity(3 * triangles.len() / 2 + 8);
        let mut element_faces = vec![[usize::MAX; 3]; triangles.len()];
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.capacity());
        for (e, t) in triangles.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                let key = edge_key(a, b);
                match lookup.get(&key) {
                    None => {
                        lookup.insert(key, faces.len());
                        element_faces[e][i] = faces.len();
                        faces.push(Face {
                            vertices: [a, b],
                            left: e,
                            right: None,
                            boundary: None,
                        });
                    }
                    Some(&f) => {
                        let face = &mut faces[f];
                        if face.right.is_some() {
                            return Err(MeshError::NonConforming(format!(
                                "edge ({a}, {b}) is shared by more than two triangles"
                            )));
                        }
                        if face.vertices != [b, a] {
                            return Err(MeshError::NonConforming(format!(
                                "triangles {} and {e} overlap along edge ({a}, {b})",
                                face.left
                            )));
                        }
                        face.right = Some(e);
                        element_faces[e][i] = f;
                    }
                }
            }
        }
        for face in faces.iter_mut() {
            if face.right.is_none() {
                face.boundary = Some(tag(&vertices, face.vertices[0], face.vertices[1])?);
            }
        }

        let mut vertex_elements = vec![Vec::new(); nv];
        for (e, t) in triangles.iter().enumerate() {
            for &v in t {
                vertex_elements[v].push(e);
            }
        }

        Ok(Mesh {
            vertices,
            triangles,
            faces,
            element_faces,
            element_region,
            refinement_level,
            parent,
            green,
            midpoints,
            vertex_elements,
        })
    }

    fn check_hanging_nodes(&self) -> Result<(), MeshError> {
        for face in self.faces.iter().filter(|f| f.is_boundary()) {
            let [a, b] = face.vertices;
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let d = pb - pa;
            let len2 = d.norm_squared();
            for (v, p) in self.vertices.iter().enumerate() {
                if v == a || v == b || self.vertex_elements[v].is_empty() {
                    continue;
                }
                let s = (p - pa).dot(&d) / len2;
                if s <= 1e-12 || s >= 1.0 - 1e-12 {
                    continue;
                }
                let dist = (p - (pa + d * s)).norm();
                if dist <= 1e-12 * len2.sqrt() {
                    return Err(MeshError::NonConforming(format!(
                        "vertex {v} hangs on edge ({a}, {b})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// A triangulated disk satisfies V - E + F = 1 and has one boundary loop.
    fn check_topology(&self) -> Result<(), MeshError> {
        let used = self.vertex_elements.iter().filter(|v| !v.is_empty()).count() as i64;
        let euler = used - self.faces.len() as i64 + self.triangles.len() as i64;
        if euler != 1 {
            return Err(MeshError::NonConforming(format!(
                "triangulation is not a simply connected polygon (Euler characteristic {euler})"
            )));
        }
        Ok(())
    }

    /// Full conformity check: two elements per interior face, one per boundary
    /// face, no vertex hanging on a boundary edge.
    pub fn check_conformity(&self) -> Result<(), MeshError> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for i in 0..3 {
                *count.entry(edge_key(t[i], t[(i + 1) % 3])).or_default() += 1;
            }
        }
        for face in &self.faces {
            let c = count[&edge_key(face.vertices[0], face.vertices[1])];
            let expected = if face.is_boundary() { 1 } else { 2 };
            if c != expected {
                return Err(MeshError::NonConforming(format!(
                    "face {:?} used by {c} elements",
                    face.vertices
                )));
            }
        }
        self.check_hanging_nodes()?;
        self.check_topology()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    pub fn element_faces(&self, e: usize) -> [usize; 3] {
        self.element_faces[e]
    }

    pub fn region(&self, e: usize) -> usize {
        self.element_region[e]
    }

    pub fn regions(&self) -> &[usize] {
        &self.element_region
    }

    pub fn refinement_level(&self, e: usize) -> u32 {
        self.refinement_level[e]
    }

    /// Index of the element this one was produced from in the mesh that was
    /// refined to obtain this one.
    pub fn parent(&self, e: usize) -> Option<usize> {
        self.parent[e]
    }

    pub fn is_green(&self, e: usize) -> bool {
        self.green[e].is_some()
    }

    pub fn vertex_elements(&self, v: usize) -> &[usize] {
        &self.vertex_elements[v]
    }

    pub fn element_vertices(&self, e: usize) -> [Point; 3] {
        let t = self.triangles[e];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn area(&self, e: usize) -> f64 {
        let [a, b, c] = self.element_vertices(e);
        signed_area(&a, &b, &c)
    }

    pub fn centroid(&self, e: usize) -> Point {
        let [a, b, c] = self.element_vertices(e);
        (a + b + c) / 3.0
    }

    /// Element diameter (longest edge).
    pub fn diameter(&self, e: usize) -> f64 {
        let [a, b, c] = self.element_vertices(e);
        (b - a).norm().max((c - b).norm()).max((a - c).norm())
    }

    pub fn min_angle(&self, e: usize) -> f64 {
        let p = self.element_vertices(e);
        (0..3)
            .map(|i| {
                let u = p[(i + 1) % 3] - p[i];
                let v = p[(i + 2) % 3] - p[i];
                (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Barycentric coordinates of `x` with respect to element `e`.
    pub fn barycentric(&self, e: usize, x: &Point) -> [f64; 3] {
        let [a, b, c] = self.element_vertices(e);
        let area = signed_area(&a, &b, &c);
        let l0 = signed_area(x, &b, &c) / area;
        let l1 = signed_area(&a, x, &c) / area;
        [l0, l1, 1.0 - l0 - l1]
    }

    pub fn contains(&self, e: usize, x: &Point) -> bool {
        self.barycentric(e, x).iter().all(|&l| l >= -INSIDE_TOL)
    }

    /// Unit normal (left→right, outward on the boundary), length and endpoints.
    pub fn face_geometry(&self, f: usize) -> FaceGeometry {
        let [a, b] = self.faces[f].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let d = pb - pa;
        let length = d.norm();
        FaceGeometry {
            normal: Point::new(d.y, -d.x) / length,
            length,
            endpoints: [pa, pb],
        }
    }

    /// +1 when `e` is the left element of its local face `i`, -1 otherwise.
    pub fn face_sign(&self, e: usize, i: usize) -> f64 {
        if self.faces[self.element_faces[e][i]].left == e {
            1.0
        } else {
            -1.0
        }
    }

    /// Neighbour across local face `i` of element `e`.
    pub fn neighbor(&self, e: usize, i: usize) -> Option<usize> {
        let face = &self.faces[self.element_faces[e][i]];
        if face.left == e {
            face.right
        } else {
            Some(face.left)
        }
    }

    /// Element containing `x`; on shared edges or vertices, the lowest index.
    pub fn locate_point(&self, x: &Point) -> Result<usize, MeshError> {
        self.locate_point_from(x, 0)
    }

    /// As [`Mesh::locate_point`], starting the adjacency walk at `hint`.
    pub fn locate_point_from(&self, x: &Point, hint: usize) -> Result<usize, MeshError> {
        let found = self.walk(x, hint.min(self.num_elements().saturating_sub(1))).or_else(|| {
            (0..self.num_elements()).find(|&e| self.contains(e, x))
        });
        let e = found.ok_or(MeshError::PointOutside(x.x, x.y))?;
        // any other closed element containing x shares a vertex with e
        let best = self.triangles[e]
            .iter()
            .flat_map(|&v| self.vertex_elements[v].iter().copied())
            .filter(|&c| c < e && self.contains(c, x))
            .min()
            .unwrap_or(e);
        Ok(best)
    }

    fn walk(&self, x: &Point, start: usize) -> Option<usize> {
        let mut e = start;
        for _ in 0..(self.num_elements() + 10) {
            let l = self.barycentric(e, x);
            let (imin, lmin) = l
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
            if lmin >= -INSIDE_TOL {
                return Some(e);
            }
            // barycentric i is opposite vertex i, i.e. local edge (i+1)
            let edge = (imin + 1) % 3;
            e = self.neighbor(e, edge)?;
        }
        None
    }

    /// Elements sharing at least one vertex with any element of `set`.
    pub fn vertex_neighborhood(&self, set: &BTreeSet<usize>) -> BTreeSet<usize> {
        set.iter()
            .flat_map(|&e| self.triangles[e].iter())
            .flat_map(|&v| self.vertex_elements[v].iter().copied())
            .collect()
    }

    pub(crate) fn green_parent(&self, e: usize) -> Option<&GreenParent> {
        self.green[e].as_ref()
    }

    pub(crate) fn midpoint_map(&self) -> &HashMap<(usize, usize), usize> {
        &self.midpoints
    }

    /// Boundary tag lookup by endpoint pair, for faces present in this mesh.
    pub(crate) fn boundary_tags(&self) -> HashMap<(usize, usize), BoundaryKind> {
        self.faces
            .iter()
            .filter_map(|f| f.boundary.map(|k| (edge_key(f.vertices[0], f.vertices[1]), k)))
            .collect()
    }
}

/// Selects the `⌈fraction·N⌉` elements with largest `|η|`, ties broken by
/// lower element index. All-zero indicators select nothing.
pub fn mark_fixed_fraction(indicators: &[f64], fraction: f64) -> Result<MarkedSet, MeshError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(MeshError::InvalidFraction(fraction));
    }
    if indicators.iter().all(|&v| v == 0.0) {
        return Ok(MarkedSet::default());
    }
    let count = ((fraction * indicators.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&i, &j| {
        indicators[j]
            .abs()
            .total_cmp(&indicators[i].abs())
            .then(i.cmp(&j))
    });
    Ok(order.into_iter().take(count).collect())
}

/// Same as [`mark_fixed_fraction`] but checks the indicator count against a mesh.
pub fn mark_elements(mesh: &Mesh, indicators: &[f64], fraction: f64) -> Result<MarkedSet, MeshError> {
    if indicators.len() != mesh.num_elements() {
        return Err(MeshError::IndicatorLength {
            got: indicators.len(),
            expected: mesh.num_elements(),
        });
    }
    mark_fixed_fraction(indicators, fraction)
}

/// Unit square `(0,1)²` split along the diagonal (0,0)–(1,1).
pub fn unit_square(kind: BoundaryKind) -> Mesh {
    build_mesh(
        vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
        vec![0, 0],
        |_| Some(kind),
    )
    .expect("unit square mesh is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Mesh {
        unit_square(BoundaryKind::Dirichlet)
    }

    #[test]
    fn two_triangle_square_counts() {
        let m = square();
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.num_elements(), 2);
        assert_eq!(m.num_faces(), 5);
        assert_eq!(m.faces().iter().filter(|f| !f.is_boundary()).count(), 1);
        m.check_conformity().unwrap();
    }

    #[test]
    fn face_normals() {
        let m = square();
        for f in 0..m.num_faces() {
            let g = m.face_geometry(f);
            assert!((g.normal.norm() - 1.0).abs() < 1e-15);
            let mid = 0.5 * (g.endpoints[0] + g.endpoints[1]);
            if mid.y == 0.0 {
                assert_eq!(g.normal, Point::new(0.0, -1.0));
                assert_eq!(g.length, 1.0);
            }
            if mid.x == 0.0 {
                assert_eq!(g.normal, Point::new(-1.0, 0.0));
            }
            if !m.face(f).is_boundary() {
                // diagonal: perpendicular to (1,1)
                assert!(g.normal.dot(&Point::new(1.0, 1.0)).abs() < 1e-15);
                // points from left into right
                let face = m.face(f);
                let into_right = m.centroid(face.right.unwrap()) - mid;
                assert!(g.normal.dot(&into_right) > 0.0);
            }
        }
    }

    #[test]
    fn hole_is_rejected() {
        // 3x3 grid of squares with the centre square missing
        let mut v = Vec::new();
        for j in 0..4 {
            for i in 0..4 {
                v.push(Point::new(i as f64, j as f64));
            }
        }
        let mut t = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                if i == 1 && j == 1 {
                    continue;
                }
                let a = j * 4 + i;
                t.push([a, a + 1, a + 5]);
                t.push([a, a + 5, a + 4]);
            }
        }
        let n = t.len();
        let err = build_mesh(v, t, vec![0; n], |_| Some(BoundaryKind::Neumann)).unwrap_err();
        assert!(matches!(err, MeshError::NonConforming(_)), "{err}");
    }

    #[test]
    fn hanging_node_is_rejected() {
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::new(0.5, 0.5),
        ];
        // lower triangle keeps the full diagonal, upper part splits it at vertex 4
        let t = vec![[0, 1, 2], [0, 4, 3], [4, 2, 3]];
        let err = build_mesh(v, t, vec![0; 3], |_| Some(BoundaryKind::Neumann)).unwrap_err();
        assert!(matches!(err, MeshError::NonConforming(_)), "{err}");
    }

    #[test]
    fn inverted_and_untagged() {
        let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let err = build_mesh(v.clone(), vec![[0, 2, 1]], vec![0], |_| Some(BoundaryKind::Neumann))
            .unwrap_err();
        assert!(matches!(err, MeshError::Inverted { .. }));
        let err = build_mesh(v, vec![[0, 1, 2]], vec![0], |p: &Point| {
            (p.y == 0.0).then_some(BoundaryKind::Neumann)
        })
        .unwrap_err();
        assert!(matches!(err, MeshError::UntaggedBoundary(..)));
    }

    #[test]
    fn marking_examples() {
        let m = mark_fixed_fraction(&[4.0, 1.0, 3.0, 2.0], 0.25).unwrap();
        assert_eq!(m.elements.iter().copied().collect::<Vec<_>>(), vec![0]);
        let m = mark_fixed_fraction(&[1.0, 1.0, 1.0, 1.0], 0.5).unwrap();
        assert_eq!(m.elements.iter().copied().collect::<Vec<_>>(), vec![0, 1]);
        let m = mark_fixed_fraction(&[0.0, 0.0], 0.5).unwrap();
        assert!(m.is_empty());
        assert!(mark_fixed_fraction(&[1.0], 0.0).is_err());
        assert!(mark_fixed_fraction(&[1.0], 1.5).is_err());
    }

    #[test]
    fn marking_by_absolute_value_matches_exhaustive_oracle() {
        // For two elements and fraction 1/2, the selected element must be the
        // one whose |η| is maximal among all single-element subsets.
        for pair in [[-5.0, 2.0], [2.0, -5.0], [-1.0, 1.0], [0.5, -0.25]] {
            let picked = mark_fixed_fraction(&pair, 0.5).unwrap();
            let best = (0..2)
                .max_by(|&i, &j| pair[i].abs().total_cmp(&pair[j].abs()).then(j.cmp(&i)))
                .unwrap();
            assert_eq!(picked.elements.iter().copied().collect::<Vec<_>>(), vec![best]);
        }
    }

    #[test]
    fn locate_examples() {
        let m = refine(&square(), &MarkedSet::all(&square()));
        for e in 0..m.num_elements() {
            assert_eq!(m.locate_point(&m.centroid(e)).unwrap(), e);
        }
        for f in m.faces().iter().filter(|f| !f.is_boundary()) {
            let mid = 0.5 * (m.vertices()[f.vertices[0]] + m.vertices()[f.vertices[1]]);
            let lo = f.left.min(f.right.unwrap());
            assert_eq!(m.locate_point(&mid).unwrap(), lo);
        }
        assert!(matches!(
            m.locate_point(&Point::new(1.5, 0.5)),
            Err(MeshError::PointOutside(..))
        ));
    }
}
