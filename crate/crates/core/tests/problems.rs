use proptest::prelude::*;
use traveltime::mesh::BoundaryKind;
use traveltime::problems::{example_i, example_ii, example_iii, Expr, ProblemConfig, ProblemError, Var};
use traveltime::Point;

#[test]
fn example_one_travel_time_and_fields() {
    let p = example_i().build().unwrap();
    let t = p.exact.as_ref().unwrap().travel_time;
    let sec = |v: f64| 1.0 / v.cos();
    let oracle = ((1f64.tan() + sec(1.0)) / (0.3f64.tan() + sec(0.3))).ln();
    assert_eq!(t, oracle);
    assert!((t - 0.9216).abs() < 5e-5);
    let x0 = Point::new(0.0, 0.0);
    assert_eq!(p.spec.source.eval(&x0), 1.0);
    let ex = p.exact.as_ref().unwrap();
    let g = ex.velocity_gradient();
    assert_eq!(g[0][0].eval(0.0, 0.0) + g[1][1].eval(0.0, 0.0), 1.0);
    // -grad p = u with K = I
    let x = Point::new(0.37, 0.81);
    let dp = [ex.pressure.derivative(Var::X), ex.pressure.derivative(Var::Y)];
    let u = ex.velocity_at(&x);
    assert!((u.x + dp[0].eval(x.x, x.y)).abs() < 1e-15);
    assert!((u.y + dp[1].eval(x.x, x.y)).abs() < 1e-15);
    assert!(p.mesh.faces().iter().filter(|f| f.is_boundary()).all(|f| f.boundary == Some(BoundaryKind::Dirichlet)));
}

#[test]
fn broken_exact_solution_fails_self_check() {
    let mut c = example_i();
    c.exact.as_mut().unwrap().pressure = "cos(x) - sin(y) + 1e-6 * x".into();
    assert!(matches!(c.build(), Err(ProblemError::SelfCheck { .. })));
    let mut c = example_i();
    c.source = "cos(x) - sin(y) + 1e-8".into();
    assert!(matches!(c.build(), Err(ProblemError::SelfCheck { .. })));
}

#[test]
fn example_two_geometry_and_tags() {
    let p = example_ii().build().unwrap();
    assert_eq!(p.config.provenance, "placeholder");
    assert!(p.config.geometry.vertices.contains(&[1.0, 0.9]));
    for v in &p.config.geometry.vertices {
        assert!(v[1] + v[0] / 10.0 <= 1.0 + 1e-12);
    }
    for (fi, f) in p.mesh.faces().iter().enumerate() {
        if !f.is_boundary() {
            continue;
        }
        let g = p.mesh.face_geometry(fi);
        let m = (g.endpoints[0] + g.endpoints[1]) / 2.0;
        let top = (m.y + m.x / 10.0 - 1.0).abs() < 1e-12;
        let want = if top { BoundaryKind::Dirichlet } else { BoundaryKind::Neumann };
        assert_eq!(f.boundary, Some(want), "face at {m:?}");
    }
    assert_eq!(p.spec.source.eval(&Point::new(0.3, 0.4)), 0.0);
    let k_top = p.spec.material(0).unwrap().conductivity[(0, 0)];
    let k_bottom = p.spec.material(1).unwrap().conductivity[(0, 0)];
    assert_eq!(k_top / k_bottom, 10.0);
    assert_eq!(p.spec.porosity(0).unwrap(), 0.2);
    assert_eq!(p.spec.porosity(1).unwrap(), 0.15);
    // interface along y = 1/2
    for e in 0..p.mesh.num_elements() {
        let c = p.mesh.centroid(e);
        assert_eq!(p.mesh.region(e), if c.y > 0.5 { 0 } else { 1 });
    }
}

#[test]
fn example_three_data() {
    let p = example_iii().build().unwrap();
    let g = p.spec.dirichlet.eval(&Point::new(0.0, 0.0));
    assert!((g - 1.013e5 / 9.81e3).abs() < 1e-12);
    assert!((g - 10.326).abs() < 1e-3);
    assert_eq!(p.spec.source.eval(&Point::new(10.0, -20.0)), 0.0);
    let ks: Vec<f64> = (0..6).map(|r| p.spec.material(r).unwrap().conductivity[(0, 0)]).collect();
    assert!(ks[1..].iter().all(|&k| ks[0] <= 1e-3 * k), "{ks:?}");
    let mut regions: Vec<usize> = p.config.geometry.regions.clone();
    regions.sort();
    regions.dedup();
    assert_eq!(regions, (0..6).collect::<Vec<_>>());
}

#[test]
fn shipped_configs_round_trip() {
    for c in [example_i(), example_ii(), example_iii()] {
        let once = c.to_toml().unwrap();
        let parsed = ProblemConfig::from_toml(&once).unwrap();
        assert_eq!(parsed, c);
        assert_eq!(parsed.to_toml().unwrap(), once);
    }
}

#[test]
fn loader_rejects_bad_input() {
    let mut c = example_ii();
    c.materials.retain(|m| m.region != 1);
    assert!(matches!(c.build(), Err(ProblemError::MissingMaterial(1))));
    let mut c = example_ii();
    c.source = "1 +".into();
    assert!(matches!(c.build(), Err(ProblemError::Expr { .. })));
    assert!(matches!(ProblemConfig::from_toml("name = 3"), Err(ProblemError::Toml(_))));
}

proptest! {
    #[test]
    fn config_round_trip_is_byte_identical(
        x0 in (0.01f64..0.99, 0.01f64..0.99),
        k in 1e-6f64..1e6,
        phi in 0.01f64..1.0,
        frac in 0.01f64..1.0,
        iters in proptest::option::of(1usize..50),
        dofs in proptest::option::of(1usize..1_000_000),
        name in "[a-z][a-z0-9_ -]{0,20}",
    ) {
        let mut c = example_i();
        c.release_point = [x0.0, x0.1];
        c.materials[0].conductivity = [[k, 0.0], [0.0, k]];
        c.materials[0].porosity = phi;
        c.refinement.fraction = frac;
        c.refinement.max_iters = iters;
        c.refinement.max_dofs = dofs;
        c.name = name;
        let once = c.to_toml().unwrap();
        let parsed = ProblemConfig::from_toml(&once).unwrap();
        prop_assert_eq!(&parsed, &c);
        prop_assert_eq!(parsed.to_toml().unwrap(), once);
    }

    #[test]
    fn symbolic_derivative_matches_central_difference(a in -2.0f64..2.0, b in -2.0f64..2.0, x in 0.2f64..1.5, y in 0.2f64..1.5) {
        let src = format!("sin({a} * x) * exp({b} * y) + x^3 / (1 + y^2) + sqrt(x * y) + log(x + y)");
        let e = Expr::parse(&src).unwrap();
        let h = 1e-5;
        let fd = (e.eval(x + h, y) - e.eval(x - h, y)) / (2.0 * h);
        let d = e.derivative(Var::X).eval(x, y);
        prop_assert!((d - fd).abs() <= 1e-7 * d.abs().max(1.0));
    }
}
