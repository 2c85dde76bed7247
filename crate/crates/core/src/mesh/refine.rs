//! Red-green refinement with green-closure reversion.
//!
//! Marked elements are split into four (red). A neighbour with exactly one
//! split edge is bisected (green); a neighbour with two or more is made red.
//! A green element is never split again: whenever it is marked or touched by
//! a split edge, it and its sibling are replaced by their parent, which is
//! then refined red.

use std::collections::{HashMap, HashSet};

use super::{edge_key, BoundaryKind, GreenParent, MarkedSet, Mesh, MeshError};
use crate::Point;

#[derive(Clone, Debug)]
struct Item {
    triangle: [usize; 3],
    region: usize,
    level: u32,
    origin: usize,
    green: Option<GreenParent>,
    alive: bool,
    red: bool,
}

/// Refines the marked elements and closes the mesh conformingly.
///
/// Panics if `marked` references elements outside the mesh; use
/// [`try_refine`] for a fallible version.
pub fn refine(mesh: &Mesh, marked: &MarkedSet) -> Mesh {
    try_refine(mesh, marked).expect("refinement input must reference valid elements")
}

pub fn try_refine(mesh: &Mesh, marked: &MarkedSet) -> Result<Mesh, MeshError> {
    if let Some(&bad) = marked.elements.iter().find(|&&e| e >= mesh.num_elements()) {
        return Err(MeshError::InvalidMarked(bad));
    }
    if marked.is_empty() {
        return Ok(mesh.clone());
    }

    let mut items: Vec<Item> = (0..mesh.num_elements())
        .map(|e| Item {
            triangle: mesh.triangles()[e],
            region: mesh.region(e),
            level: mesh.refinement_level(e),
            origin: e,
            green: mesh.green_parent(e).cloned(),
            alive: true,
            red: false,
        })
        .collect();

    // green siblings share the parent triangle
    let mut siblings: HashMap<[usize; 3], Vec<usize>> = HashMap::new();
    for (i, item) in items.iter().enumerate() {
        if let Some(g) = &item.green {
            siblings.entry(g.triangle).or_default().push(i);
        }
    }

    let mut state = Splitter {
        vertices: mesh.vertices().to_vec(),
        midpoints: mesh.midpoint_map().clone(),
        reverted: Vec::new(),
    };

    for &e in &marked.elements {
        if !items[e].alive {
            continue;
        }
        if items[e].green.is_some() {
            state.revert(&mut items, e, &siblings);
        } else {
            items[e].red = true;
        }
    }

    loop {
        let split = state.split_edges(&items);
        let mut changed = false;
        for i in 0..items.len() {
            if !items[i].alive || items[i].red {
                continue;
            }
            let t = items[i].triangle;
            let count = (0..3)
                .filter(|&k| split.contains(&edge_key(t[k], t[(k + 1) % 3])))
                .count();
            if count == 0 {
                continue;
            }
            if items[i].green.is_some() {
                state.revert(&mut items, i, &siblings);
                changed = true;
            } else if count >= 2 {
                items[i].red = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let split = state.split_edges(&items);

    let mut triangles = Vec::new();
    let mut regions = Vec::new();
    let mut levels = Vec::new();
    let mut parents = Vec::new();
    let mut greens = Vec::new();
    for item in items.iter().filter(|it| it.alive) {
        let [a, b, c] = item.triangle;
        let mut push = |tri: [usize; 3], level: u32, green: Option<GreenParent>| {
            triangles.push(tri);
            regions.push(item.region);
            levels.push(level);
            parents.push(Some(item.origin));
            greens.push(green);
        };
        if item.red {
            let mab = state.mid(a, b);
            let mbc = state.mid(b, c);
            let mca = state.mid(c, a);
            push([a, mab, mca], item.level + 1, None);
            push([mab, b, mbc], item.level + 1, None);
            push([mca, mbc, c], item.level + 1, None);
            push([mab, mbc, mca], item.level + 1, None);
            continue;
        }
        let t = item.triangle;
        let split_edge = (0..3).find(|&k| split.contains(&edge_key(t[k], t[(k + 1) % 3])));
        match split_edge {
            None => push(t, item.level, item.green.clone()),
            Some(k) => {
                let (p, q, r) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
                let m = state.mid(p, q);
                let g = GreenParent {
                    triangle: t,
                    level: item.level,
                };
                push([p, m, r], item.level + 1, Some(g.clone()));
                push([m, q, r], item.level + 1, Some(g));
            }
        }
    }

    let old_tags = mesh.boundary_tags();
    let Splitter {
        vertices,
        midpoints,
        ..
    } = state;
    let parent_edge: HashMap<usize, (usize, usize)> =
        midpoints.iter().map(|(&edge, &m)| (m, edge)).collect();
    let lookup_midpoints = midpoints.clone();
    Mesh::assemble(
        vertices,
        triangles,
        regions,
        levels,
        parents,
        greens,
        midpoints,
        |_, a, b| {
            inherited_tag(&old_tags, &parent_edge, &lookup_midpoints, a, b, 0)
                .ok_or(MeshError::UntaggedBoundary(a, b))
        },
    )
}

struct Splitter {
    vertices: Vec<Point>,
    midpoints: HashMap<(usize, usize), usize>,
    /// Parents restored from green pairs; their edges count as split.
    reverted: Vec<[usize; 3]>,
}

impl Splitter {
    fn mid(&mut self, a: usize, b: usize) -> usize {
        let vertices = &mut self.vertices;
        *self.midpoints.entry(edge_key(a, b)).or_insert_with(|| {
            vertices.push(0.5 * (vertices[a] + vertices[b]));
            vertices.len() - 1
        })
    }

    /// Puts back the parent of a green pair, already split into its four red
    /// children; those take part in the closure like any other element.
    fn revert(&mut self, items: &mut Vec<Item>, i: usize, siblings: &HashMap<[usize; 3], Vec<usize>>) {
        let g = items[i].green.clone().expect("only green items are reverted");
        let group = &siblings[&g.triangle];
        let origin = group.iter().map(|&s| items[s].origin).min().unwrap();
        let region = items[i].region;
        for &s in group {
            items[s].alive = false;
        }
        let [a, b, c] = g.triangle;
        let mab = self.mid(a, b);
        let mbc = self.mid(b, c);
        let mca = self.mid(c, a);
        self.reverted.push(g.triangle);
        for triangle in [[a, mab, mca], [mab, b, mbc], [mca, mbc, c], [mab, mbc, mca]] {
            items.push(Item {
                triangle,
                region,
                level: g.level + 1,
                origin,
                green: None,
                alive: true,
                red: false,
            });
        }
    }

    fn split_edges(&self, items: &[Item]) -> HashSet<(usize, usize)> {
        items
            .iter()
            .filter(|it| it.alive && it.red)
            .map(|it| it.triangle)
            .chain(self.reverted.iter().copied())
            .flat_map(|t| [edge_key(t[0], t[1]), edge_key(t[1], t[2]), edge_key(t[2], t[0])])
            .collect()
    }
}

/// Tag of a boundary edge of the refined mesh, found through the edge it was
/// split from (or the halves it replaces).
fn inherited_tag(
    tags: &HashMap<(usize, usize), BoundaryKind>,
    parent_edge: &HashMap<usize, (usize, usize)>,
    midpoints: &HashMap<(usize, usize), usize>,
    a: usize,
    b: usize,
    depth: usize,
) -> Option<BoundaryKind> {
    if let Some(&k) = tags.get(&edge_key(a, b)) {
        return Some(k);
    }
    if depth > 64 {
        return None;
    }
    for (m, other) in [(a, b), (b, a)] {
        if let Some(&(p, q)) = parent_edge.get(&m) {
            if other == p || other == q {
                if let Some(k) = inherited_tag(tags, parent_edge, midpoints, p, q, depth + 1) {
                    return Some(k);
                }
            }
        }
    }
    if let Some(&m) = midpoints.get(&edge_key(a, b)) {
        return tags
            .get(&edge_key(a, m))
            .or_else(|| tags.get(&edge_key(m, b)))
            .copied();
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_square;

    fn total_area(m: &Mesh) -> f64 {
        (0..m.num_elements()).map(|e| m.area(e)).sum()
    }

    #[test]
    fn uniform_red_step() {
        let m = unit_square(BoundaryKind::Dirichlet);
        let r = refine(&m, &MarkedSet::all(&m));
        assert_eq!(r.num_elements(), 8);
        r.check_conformity().unwrap();
        assert!((total_area(&r) - 1.0).abs() < 1e-15);
        assert!(r.faces().iter().filter(|f| f.is_boundary()).all(|f| f.boundary
            == Some(BoundaryKind::Dirichlet)));
    }

    #[test]
    fn one_marked_gives_red_plus_green() {
        let m = unit_square(BoundaryKind::Neumann);
        let r = refine(&m, &[0].into_iter().collect());
        assert_eq!(r.num_elements(), 6);
        r.check_conformity().unwrap();
        assert_eq!((0..6).filter(|&e| r.is_green(e)).count(), 2);
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = unit_square(BoundaryKind::Neumann);
        let r = refine(&m, &MarkedSet::default());
        assert_eq!(r.triangles(), m.triangles());
        assert_eq!(r.vertices(), m.vertices());
    }

    #[test]
    fn marked_green_is_replaced_by_red_parent() {
        let m = unit_square(BoundaryKind::Neumann);
        let r = refine(&m, &[0].into_iter().collect());
        let green: Vec<usize> = (0..r.num_elements()).filter(|&e| r.is_green(e)).collect();
        let r2 = refine(&r, &[green[0]].into_iter().collect());
        r2.check_conformity().unwrap();
        // both halves of the square are now red-refined: 8 triangles
        assert_eq!(r2.num_elements(), 8);
        assert!((0..8).all(|e| !r2.is_green(e)));
        assert!((0..8).all(|e| r2.refinement_level(e) == 1));
        let min_angle = (0..8).map(|e| r2.min_angle(e)).fold(f64::INFINITY, f64::min);
        assert!((min_angle - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn boundary_tags_are_inherited() {
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let m = crate::mesh::build_mesh(v, vec![[0, 1, 2], [0, 2, 3]], vec![0, 1], |p| {
            Some(if p.y > 0.99 { BoundaryKind::Dirichlet } else { BoundaryKind::Neumann })
        })
        .unwrap();
        let mut r = m.clone();
        for step in 0..4 {
            let marked: MarkedSet = (0..r.num_elements()).filter(|e| e % 3 == step % 3).collect();
            r = refine(&r, &marked);
            r.check_conformity().unwrap();
            for f in r.faces().iter().filter(|f| f.is_boundary()) {
                let mid = 0.5 * (r.vertices()[f.vertices[0]] + r.vertices()[f.vertices[1]]);
                let expected = if mid.y > 0.99 {
                    BoundaryKind::Dirichlet
                } else {
                    BoundaryKind::Neumann
                };
                assert_eq!(f.boundary, Some(expected));
            }
            for e in 0..r.num_elements() {
                let c = r.centroid(e);
                let expected_region = if c.x > c.y { 0 } else { 1 };
                assert_eq!(r.region(e), expected_region);
            }
        }
    }
}
