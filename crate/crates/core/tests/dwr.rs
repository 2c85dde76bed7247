use std::collections::BTreeMap;
use std::sync::Arc;

use traveltime::dwr::{effectivity, global_estimate, run_dwr, DwrReport};
use traveltime::fem::{Material, ProblemSpec, ScalarField};
use traveltime::mesh::{build_mesh, refine, BoundaryKind, MarkedSet, Mesh};
use traveltime::Point;

fn square() -> Mesh {
    let v = vec![
        Point::new(0.0, 0.0),
        Point::new(1.0, 0.0),
        Point::new(1.0, 1.0),
        Point::new(0.0, 1.0),
    ];
    build_mesh(v, vec![[0, 1, 3], [1, 2, 3]], vec![0, 0], |_| Some(BoundaryKind::Dirichlet)).unwrap()
}

fn problem() -> ProblemSpec {
    let mut regions = BTreeMap::new();
    regions.insert(0, Material::isotropic(1.0, 1.0));
    let p = |x: &Point| x.x.cos() - x.y.sin();
    ProblemSpec::new(regions, ScalarField::new(p), ScalarField::new(p), Point::new(0.1, 0.3)).unwrap()
}

fn exact_time() -> f64 {
    let f = |y: f64| (y.tan() + 1.0 / y.cos()).ln();
    f(1.0) - f(0.3)
}

fn reports(steps: usize) -> Vec<DwrReport> {
    let problem = problem();
    let mut mesh = square();
    let mut out = Vec::new();
    for _ in 0..steps {
        out.push(run_dwr(Arc::new(mesh.clone()), &problem, 0, 10.0).unwrap());
        mesh = refine(&mesh, &MarkedSet::all(&mesh));
    }
    out
}

#[test]
fn effectivity_under_uniform_refinement() {
    let rows = reports(6);
    let errors: Vec<f64> = rows.iter().map(|r| exact_time() - r.travel_time).collect();
    for (i, r) in rows.iter().enumerate().skip(2) {
        let theta = effectivity(errors[i], r.estimate).unwrap();
        assert!((0.9..=1.12).contains(&theta), "row {i}: θ = {theta}");
    }
    assert!(errors[0].abs() / errors[5].abs() >= 1e3, "{errors:?}");
}

#[test]
fn indicators_match_unlocalised_residual() {
    let problem = problem();
    for r in reports(4) {
        let pointwise = r.pointwise_residual(&problem).unwrap();
        let matrix = r.direct_residual();
        let est = global_estimate(&r.indicators);
        assert_eq!(est, r.estimate);
        assert!((pointwise.value - est).abs() <= 1e-12 * pointwise.magnitude);
        assert!((matrix - pointwise.value).abs() <= 1e-12 * pointwise.magnitude);
    }
}

#[test]
fn coarse_mesh_identity_is_tight() {
    let r = &reports(1)[0];
    let direct = r.pointwise_residual(&problem()).unwrap().value;
    assert!((direct - r.estimate).abs() <= 1e-12 * direct.abs());
}

#[test]
fn pressure_jump_terms_vanish_for_interpolated_weights() {
    // z_I matches the face moments paired with p_h, so only roundoff remains
    for r in reports(3) {
        let [_, _, _, pr] = r.indicators.component_totals();
        assert!(pr.abs() < 1e-13);
    }
}

#[test]
fn weight_is_normal_conforming() {
    for r in reports(3) {
        let scale = r.weight.velocity.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(r.weight.max_normal_jump() <= 1e-12 * scale.max(1.0));
    }
}

fn support_share(problem: &ProblemSpec, mut mesh: Mesh, steps: usize, t_max: f64) -> f64 {
    for _ in 0..steps {
        mesh = refine(&mesh, &MarkedSet::all(&mesh));
    }
    let r = run_dwr(Arc::new(mesh.clone()), problem, 0, t_max).unwrap();
    let path: std::collections::BTreeSet<usize> = r.trajectory.elements().into_iter().collect();
    let near = mesh.vertex_neighborhood(&path);
    let eta = r.indicators.totals();
    let total: f64 = eta.iter().map(|v| v.abs()).sum();
    let inside: f64 = near.iter().map(|&e| eta[e].abs()).sum();
    inside / total
}

#[test]
fn indicators_concentrate_along_the_path() {
    let one = support_share(&problem(), square(), 5, 10.0);
    let p2 = traveltime::problems::example_ii().build().unwrap();
    let two = support_share(&p2.spec, p2.mesh.clone(), 3, p2.config.max_time);
    assert!(one >= 0.8, "example I: {one}");
    assert!(two >= 0.8, "example II: {two}");
}
