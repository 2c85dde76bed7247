use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use traveltime::adjoint::{gateaux_derivative, solve_adjoint};
use traveltime::expm::expm2;
use traveltime::fem::{assemble, build_space, solve, MixedSolution};
use traveltime::mesh::{mark_fixed_fraction, refine, MarkedSet, Mesh};
use traveltime::problems::{example_i, example_ii, Problem};
use traveltime::tracer::{trace, transport_field, VelocityField};
use traveltime::{Matrix2, Point};

fn total_area(m: &Mesh) -> f64 {
    (0..m.num_elements()).map(|e| m.area(e)).sum()
}

fn min_angle(m: &Mesh) -> f64 {
    (0..m.num_elements()).map(|e| m.min_angle(e)).fold(f64::INFINITY, f64::min)
}

// Taylor series on A/2^s followed by s squarings
fn expm_reference(a: &Matrix2<f64>) -> Matrix2<f64> {
    let norm = a.abs().max();
    let s = if norm > 0.125 { (norm / 0.125).log2().ceil() as i32 } else { 0 };
    let b = a / 2f64.powi(s);
    let mut term = Matrix2::identity();
    let mut sum = Matrix2::identity();
    for n in 1..30 {
        term = term * b / n as f64;
        sum += term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

struct Fem {
    problem: Problem,
    mesh: Arc<Mesh>,
    solution: MixedSolution,
    field: VelocityField,
}

fn example_two_fem() -> &'static Fem {
    static CELL: OnceLock<Fem> = OnceLock::new();
    CELL.get_or_init(|| {
        let problem = example_ii().build().unwrap();
        let mesh = Arc::new(refine(&problem.mesh, &MarkedSet::all(&problem.mesh)));
        let space = build_space(mesh.clone(), 0).unwrap();
        let solution = solve(&assemble(&space, &problem.spec).unwrap()).unwrap();
        let field = transport_field(&solution, &problem.spec).unwrap();
        Fem {
            problem,
            mesh,
            solution,
            field,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn closed_form_exponential_matches_scaling_and_squaring(
        a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0,
    ) {
        let m = Matrix2::new(a, b, c, d);
        let e = expm2(&m);
        let r = expm_reference(&m);
        prop_assert!((e - r).norm() <= 1e-12 * r.norm(), "{m:?}: {e:?} vs {r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn refinement_keeps_conformity_and_area(picks in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 1..6), 1..5)) {
        let mut mesh = example_ii().build().unwrap().mesh;
        let area0 = total_area(&mesh);
        for round in picks {
            let n = mesh.num_elements();
            let marked: MarkedSet = round.iter().map(|u| ((u * n as f64) as usize).min(n - 1)).collect();
            let parent_area = total_area(&mesh);
            mesh = refine(&mesh, &marked);
            mesh.check_conformity().unwrap();
            prop_assert!((total_area(&mesh) - parent_area).abs() <= 1e-12 * parent_area);
            for e in 0..mesh.num_elements() {
                prop_assert!(mesh.area(e) > 0.0);
            }
        }
        prop_assert!((total_area(&mesh) - area0).abs() <= 1e-12 * area0);
    }

    #[test]
    fn marking_is_permutation_equivariant(
        values in prop::collection::btree_set(-1_000_000i64..1_000_000, 1..60)
            .prop_flat_map(|s| {
                let v: Vec<f64> = s.into_iter().map(|k| k as f64 * 1.37).collect();
                (Just(v.clone()), Just(v).prop_shuffle())
            }),
        fraction in 0.01f64..=1.0,
    ) {
        let (original, shuffled) = values;
        // distinct |η|: drop values whose magnitude repeats
        let mut seen = std::collections::BTreeSet::new();
        let original: Vec<f64> = original.into_iter().filter(|v| seen.insert(v.abs().to_bits())).collect();
        let shuffled: Vec<f64> = shuffled.into_iter().filter(|v| original.contains(v)).collect();
        let shuffled: Vec<f64> = {
            let mut out = Vec::new();
            for v in shuffled {
                if !out.iter().any(|w: &f64| w.abs() == v.abs()) {
                    out.push(v);
                }
            }
            out
        };
        prop_assume!(!original.is_empty() && original.iter().any(|v| *v != 0.0));
        let perm: Vec<usize> = shuffled.iter().map(|v| original.iter().position(|w| w == v).unwrap()).collect();
        let a = mark_fixed_fraction(&original, fraction).unwrap();
        let b = mark_fixed_fraction(&shuffled, fraction).unwrap();
        let mapped: MarkedSet = b.elements.iter().map(|&i| perm[i]).collect();
        prop_assert_eq!(a, mapped);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gateaux_derivative_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let fem = example_two_fem();
        let tr = trace(&fem.field, &fem.mesh, fem.problem.spec.release_point, 1e6).unwrap();
        let adj = solve_adjoint(&tr, &fem.field).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut random = || {
            let mut w = MixedSolution::zeros(fem.solution.space.clone());
            for (d, c) in w.velocity.iter_mut().enumerate() {
                if !w.space.constrained()[d] {
                    *c = rng.random_range(-1.0..1.0);
                }
            }
            w
        };
        let w1 = random();
        let w2 = random();
        let combo = MixedSolution::zeros(w1.space.clone()).axpy(a, &w1).axpy(b, &w2);
        let lhs = gateaux_derivative(&adj, &combo);
        let d1 = gateaux_derivative(&adj, &w1);
        let d2 = gateaux_derivative(&adj, &w2);
        let rhs = a * d1 + b * d2;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (a.abs() * d1.abs() + b.abs() * d2.abs()).max(f64::MIN_POSITIVE));
    }

    #[test]
    fn jump_identity_holds_at_every_crossing(x in 0.02f64..0.98, y in 0.02f64..0.88) {
        let fem = example_two_fem();
        prop_assume!(y + x / 10.0 < 0.99);
        let tr = match trace(&fem.field, &fem.mesh, Point::new(x, y), 1e6) {
            Ok(t) => t,
            Err(e) => {
                prop_assert!(e.is_assumption_violation(), "{e}");
                return Ok(());
            }
        };
        let adj = solve_adjoint(&tr, &fem.field).unwrap();
        prop_assert_eq!(adj.jumps.len(), tr.segments.len() - 1);
        prop_assert!(adj.max_jump_defect() <= 1e-12, "{}", adj.max_jump_defect());
    }

    #[test]
    fn continuous_field_has_no_jumps(x in 0.05f64..0.95, y in 0.05f64..0.95) {
        let p = example_i().build().unwrap();
        let mesh = refine(&p.mesh, &MarkedSet::all(&p.mesh));
        let field = p.exact_transport_field().unwrap();
        let tr = trace(&field, &mesh, Point::new(x, y), 100.0).unwrap();
        let adj = solve_adjoint(&tr, &field).unwrap();
        for j in &adj.jumps {
            prop_assert_eq!(j.z_plus, j.z_minus);
        }
    }
}

#[test]
fn uniform_red_refinement_preserves_minimum_angle() {
    for mut mesh in [example_i().build().unwrap().mesh, example_ii().build().unwrap().mesh] {
        let angle = min_angle(&mesh);
        for _ in 0..6 {
            mesh = refine(&mesh, &MarkedSet::all(&mesh));
            assert!((min_angle(&mesh) - angle).abs() <= 1e-12 * angle);
        }
    }
}
