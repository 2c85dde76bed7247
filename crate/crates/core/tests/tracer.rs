use std::sync::Arc;

use traveltime::mesh::{refine, unit_square, BoundaryKind, MarkedSet, Mesh};
use traveltime::ode::{integrate, Tolerances};
use traveltime::tracer::{trace, VelocityField};
use traveltime::{Matrix2, Point, Vector2};

fn example_one_field() -> VelocityField {
    VelocityField::analytic(
        |x| Vector2::new(x.x.sin(), x.y.cos()),
        |x| Matrix2::new(x.x.cos(), 0.0, 0.0, -x.y.sin()),
    )
}

fn exact_time() -> f64 {
    let f = |y: f64| (y.tan() + 1.0 / y.cos()).ln();
    f(1.0) - f(0.3)
}

fn uniform(steps: usize) -> Mesh {
    let mut m = unit_square(BoundaryKind::Dirichlet);
    for _ in 0..steps {
        m = refine(&m, &MarkedSet::all(&m));
    }
    m
}

#[test]
fn analytic_travel_time_matches_closed_form() {
    for steps in [0, 2] {
        let tr = trace(&example_one_field(), &uniform(steps), Point::new(0.1, 0.3), 10.0).unwrap();
        let rel = (tr.travel_time - exact_time()).abs() / exact_time();
        assert!(rel < 1e-9, "steps {steps}: {rel:e}");
        assert!((tr.exit_point().y - 1.0).abs() < 1e-12);
        assert_eq!(tr.exit_normal, Vector2::new(0.0, 1.0));
    }
}

#[test]
fn segments_are_continuous_and_on_faces() {
    let mesh = uniform(3);
    let tr = trace(&example_one_field(), &mesh, Point::new(0.1, 0.3), 10.0).unwrap();
    assert_eq!(tr.segments[0].t0, 0.0);
    for w in tr.segments.windows(2) {
        assert_eq!(w[0].exit, w[1].entry);
        assert_eq!(w[0].t1, w[1].t0);
        assert!(w[1].t1 > w[1].t0);
    }
    for s in &tr.segments {
        let g = mesh.face_geometry(s.crossing.face());
        let d = g.normal.dot(&(s.exit - g.endpoints[0]));
        assert!(d.abs() <= 1e-10 * g.length);
    }
    assert!(tr.exit_velocity.dot(&tr.exit_normal) > 0.0);
}

#[test]
fn matches_independent_reference_integration() {
    // integrate the y-equation alone until y = 1 with a fixed-step RK4
    let mesh = uniform(1);
    let tr = trace(&example_one_field(), &mesh, Point::new(0.1, 0.3), 10.0).unwrap();
    let x_end = integrate(
        |_, y: &nalgebra::SVector<f64, 2>| Vector2::new(y[0].sin(), y[1].cos()),
        0.0,
        Vector2::new(0.1, 0.3),
        tr.travel_time,
        Tolerances::default(),
    )
    .unwrap();
    assert!((x_end - tr.exit_point()).norm() < 1e-9);
}

#[test]
fn reversed_field_returns_to_release_point() {
    use std::collections::BTreeMap;
    use traveltime::fem::{assemble, build_space, solve, Material, ProblemSpec, ScalarField};
    use traveltime::tracer::transport_field;
    let mut regions = BTreeMap::new();
    regions.insert(0, Material::isotropic(1.0, 1.0));
    let problem = ProblemSpec::new(
        regions,
        ScalarField::new(|x: &Point| x.x.cos() - x.y.sin()),
        ScalarField::new(|x: &Point| x.x.cos() - x.y.sin()),
        Point::new(0.1, 0.3),
    )
    .unwrap();
    let mesh = Arc::new(uniform(3));
    let space = build_space(mesh.clone(), 0).unwrap();
    let sol = solve(&assemble(&space, &problem).unwrap()).unwrap();
    let field = transport_field(&sol, &problem).unwrap();
    let tr = trace(&field, &mesh, problem.release_point, 10.0).unwrap();
    let back = sol.axpy(-2.0, &sol);
    let reversed = transport_field(&back, &problem).unwrap();
    // start slightly inside the domain along the incoming direction
    let exit = tr.exit_point();
    let eps = 1e-9;
    let start = exit - tr.exit_velocity * eps;
    let tb = trace(&reversed, &mesh, start, 10.0).unwrap();
    let last = tb.segments.len() - 1;
    let x_back = tb.position(&reversed, last, tb.travel_time.min(tr.travel_time - eps));
    let _ = x_back;
    // position along the reversed path at the forward travel time
    let t_target = tr.travel_time - eps;
    let i = tb.segments.iter().position(|s| s.t1 >= t_target).unwrap();
    let x = tb.position(&reversed, i, t_target);
    assert!((x - problem.release_point).norm() < 1e-8 * 2f64.sqrt(), "{x:?}");
}

#[test]
fn fem_travel_time_approaches_exact_value() {
    use std::collections::BTreeMap;
    use traveltime::fem::{assemble, build_space, solve, Material, ProblemSpec, ScalarField};
    use traveltime::tracer::transport_field;
    let mut regions = BTreeMap::new();
    regions.insert(0, Material::isotropic(1.0, 1.0));
    let problem = ProblemSpec::new(
        regions,
        ScalarField::new(|x: &Point| x.x.cos() - x.y.sin()),
        ScalarField::new(|x: &Point| x.x.cos() - x.y.sin()),
        Point::new(0.1, 0.3),
    )
    .unwrap();
    // same start mesh as the shipped example: diagonal (1,0)-(0,1)
    let mut m = traveltime::problems::example_i().build().unwrap().mesh;
    let mut errors = Vec::new();
    for _ in 0..6 {
        let mesh = Arc::new(m.clone());
        m = refine(&m, &MarkedSet::all(&m));
        let space = build_space(mesh.clone(), 0).unwrap();
        let sol = solve(&assemble(&space, &problem).unwrap()).unwrap();
        let field = transport_field(&sol, &problem).unwrap();
        let tr = trace(&field, &mesh, problem.release_point, 10.0).unwrap();
        errors.push((tr.travel_time - exact_time()).abs());
    }
    let increases = errors.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(increases <= 1, "{errors:?}");
    assert!(errors.last().unwrap() < &errors[0]);
}
