//! Legacy ASCII VTK and CSV output.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::dwr::IndicatorSet;
use crate::fem::MixedSolution;
use crate::mesh::Mesh;
use crate::tracer::{Trajectory, VelocityField};
use crate::Point;

const VTK_TRIANGLE: u32 = 5;
const VTK_POLY_LINE: u32 = 4;

/// Cell data attached to a mesh file.
#[derive(Clone, Debug, PartialEq)]
pub enum CellField {
    Scalar(String, Vec<f64>),
    Vector(String, Vec<[f64; 2]>),
}

impl CellField {
    fn name(&self) -> &str {
        match self {
            CellField::Scalar(n, _) | CellField::Vector(n, _) => n,
        }
    }
}

fn fmt_f(v: f64) -> String {
    // VTK readers choke on "inf"/"NaN" spellings other than their own
    if v.is_finite() {
        format!("{v:e}")
    } else {
        "nan".into()
    }
}

/// Unstructured-grid text for `mesh` with the given cell fields.
pub fn vtk_mesh_string(mesh: &Mesh, title: &str, fields: &[CellField]) -> String {
    let mut s = String::new();
    let nv = mesh.vertices().len();
    let ne = mesh.num_elements();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {nv} double");
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} 0", fmt_f(p.x), fmt_f(p.y));
    }
    let _ = writeln!(s, "CELLS {ne} {}", 4 * ne);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    for _ in 0..ne {
        let _ = writeln!(s, "{VTK_TRIANGLE}");
    }
    let _ = writeln!(s, "CELL_DATA {ne}");
    let _ = writeln!(s, "SCALARS region int 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for e in 0..ne {
        let _ = writeln!(s, "{}", mesh.region(e));
    }
    for f in fields {
        match f {
            CellField::Scalar(name, v) => {
                let _ = writeln!(s, "SCALARS {name} double 1");
                let _ = writeln!(s, "LOOKUP_TABLE default");
                for x in v {
                    let _ = writeln!(s, "{}", fmt_f(*x));
                }
            }
            CellField::Vector(name, v) => {
                let _ = writeln!(s, "VECTORS {name} double");
                for x in v {
                    let _ = writeln!(s, "{} {} 0", fmt_f(x[0]), fmt_f(x[1]));
                }
            }
        }
    }
    s
}

pub fn write_vtk_mesh(path: &Path, mesh: &Mesh, title: &str, fields: &[CellField]) -> io::Result<()> {
    fs::write(path, vtk_mesh_string(mesh, title, fields))
}

/// Centroid velocity and element-mean pressure of a mixed solution.
pub fn solution_fields(sol: &MixedSolution, prefix: &str) -> Vec<CellField> {
    let mesh = sol.mesh();
    let mut vel = Vec::with_capacity(mesh.num_elements());
    let mut pr = Vec::with_capacity(mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let c = mesh.centroid(e);
        let u = sol.velocity_polynomial(e, &c);
        vel.push([u.x, u.y]);
        pr.push(sol.pressure_at(e, &c));
    }
    vec![
        CellField::Vector(format!("{prefix}velocity"), vel),
        CellField::Scalar(format!("{prefix}pressure"), pr),
    ]
}

/// The four indicator components and their total.
pub fn indicator_fields(ind: &IndicatorSet) -> Vec<CellField> {
    vec![
        CellField::Scalar("eta_bc".into(), ind.bc.clone()),
        CellField::Scalar("eta_dl".into(), ind.dl.clone()),
        CellField::Scalar("eta_cm".into(), ind.cm.clone()),
        CellField::Scalar("eta_pr".into(), ind.pr.clone()),
        CellField::Scalar("eta".into(), ind.totals()),
    ]
}

/// Parsed legacy VTK unstructured grid with triangle cells.
#[derive(Clone, Debug, PartialEq)]
pub struct VtkGrid {
    pub points: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub fields: Vec<CellField>,
}

impl VtkGrid {
    pub fn field(&self, name: &str) -> Option<&CellField> {
        self.fields.iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("malformed VTK input: {0}")]
pub struct VtkParseError(String);

/// Reads files produced by [`vtk_mesh_string`].
pub fn parse_vtk_mesh(text: &str) -> Result<VtkGrid, VtkParseError> {
    let err = |m: &str| VtkParseError(m.to_string());
    let mut lines = text.lines().skip(4).filter(|l| !l.trim().is_empty());
    let num = |s: &str| s.parse::<f64>().map_err(|_| err(s));
    let count = |s: Option<&str>| -> Result<usize, VtkParseError> {
        s.and_then(|v| v.parse().ok()).ok_or_else(|| err("count"))
    };
    let mut grid = VtkGrid {
        points: Vec::new(),
        triangles: Vec::new(),
        fields: Vec::new(),
    };
    let mut n_cells = 0;
    while let Some(line) = lines.next() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("POINTS") => {
                let n = count(it.next())?;
                for _ in 0..n {
                    let l = lines.next().ok_or_else(|| err("points"))?;
                    let v: Vec<&str> = l.split_whitespace().collect();
                    grid.points.push(Point::new(num(v[0])?, num(v[1])?));
                }
            }
            Some("CELLS") => {
                n_cells = count(it.next())?;
                for _ in 0..n_cells {
                    let l = lines.next().ok_or_else(|| err("cells"))?;
                    let v: Vec<usize> = l.split_whitespace().filter_map(|x| x.parse().ok()).collect();
                    if v.len() != 4 || v[0] != 3 {
                        return Err(err("only triangles are supported"));
                    }
                    grid.triangles.push([v[1], v[2], v[3]]);
                }
            }
            Some("CELL_TYPES") => {
                for _ in 0..count(it.next())? {
                    lines.next();
                }
            }
            Some("CELL_DATA") => {}
            Some("SCALARS") => {
                let name = it.next().ok_or_else(|| err("scalar name"))?.to_string();
                lines.next();
                let v = (0..n_cells)
                    .map(|_| lines.next().ok_or_else(|| err("scalars")).and_then(|l| num(l.trim())))
                    .collect::<Result<Vec<_>, _>>()?;
                grid.fields.push(CellField::Scalar(name, v));
            }
            Some("VECTORS") => {
                let name = it.next().ok_or_else(|| err("vector name"))?.to_string();
                let v = (0..n_cells)
                    .map(|_| {
                        let l = lines.next().ok_or_else(|| err("vectors"))?;
                        let c: Vec<&str> = l.split_whitespace().collect();
                        Ok([num(c[0])?, num(c[1])?])
                    })
                    .collect::<Result<Vec<_>, VtkParseError>>()?;
                grid.fields.push(CellField::Vector(name, v));
            }
            _ => return Err(err(line)),
        }
    }
    Ok(grid)
}

/// Trajectory samples as `t,x,y,element` rows.
pub fn trajectory_csv(traj: &Trajectory, field: &VelocityField, per_segment: usize) -> String {
    let mut s = String::from("t,x,y,element\n");
    for (t, x, e) in traj.samples(field, per_segment) {
        let _ = writeln!(s, "{t:.17e},{:.17e},{:.17e},{e}", x.x, x.y);
    }
    s
}

/// Trajectory as a single polyline.
pub fn trajectory_vtk(traj: &Trajectory, field: &VelocityField, per_segment: usize) -> String {
    let samples = traj.samples(field, per_segment);
    let n = samples.len();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "trajectory");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {n} double");
    for (_, x, _) in &samples {
        let _ = writeln!(s, "{} {} 0", fmt_f(x.x), fmt_f(x.y));
    }
    let _ = writeln!(s, "CELLS 1 {}", n + 1);
    let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let _ = writeln!(s, "{n} {}", ids.join(" "));
    let _ = writeln!(s, "CELL_TYPES 1");
    let _ = writeln!(s, "{VTK_POLY_LINE}");
    let _ = writeln!(s, "POINT_DATA {n}");
    let _ = writeln!(s, "SCALARS time double 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for (t, _, _) in &samples {
        let _ = writeln!(s, "{}", fmt_f(*t));
    }
    s
}
