//! Linear algebra kernel, system model and invariant zeros.

mod common;

use approx::assert_relative_eq;
use decoupling::error::Error;
use decoupling::numkit::{self, CMatrix, CVector, RMatrix, SubspaceBasis, C64};
use decoupling::pencil;
use decoupling::sysmodel::{self, LtiSystem, StabilityRegion, SystemFile, TimeDomain};
use nalgebra::DVector;
use proptest::prelude::*;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn e(n: usize, k: usize) -> CVector {
    let mut v = CVector::zeros(n);
    v[k] = c(1.0);
    v
}

fn line(v: CVector) -> SubspaceBasis {
    SubspaceBasis::span(&CMatrix::from_columns(&[v]), 1e-12).unwrap()
}

fn random_orthogonal(rng: &mut common::TestRng, n: usize) -> RMatrix {
    common::gauss(rng, n, n).qr().q()
}

#[test]
fn rank_examples() {
    assert_eq!(numkit::rank_of(&RMatrix::identity(3, 3), 1e-12).unwrap(), 3);
    assert_eq!(numkit::rank_of(&RMatrix::zeros(2, 4), 1e-12).unwrap(), 0);
    // Second row is twice the first.
    let m = RMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
    assert_eq!(numkit::rank_of(&m, 1e-12).unwrap(), 1);
    let bad = RMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
    assert!(matches!(numkit::rank_of(&bad, 1e-12), Err(Error::InvalidMatrix(_))));
}

#[test]
fn null_space_examples() {
    let k = numkit::null_space(&RMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]), 1e-12).unwrap();
    assert_eq!(k.ncols(), 2);
    let span = SubspaceBasis::span(&k, 1e-12).unwrap();
    let e23 = numkit::sum_of(3, [&line(e(3, 1)), &line(e(3, 2))], 1e-12).unwrap();
    assert!(span.same_as(&e23, 1e-10).unwrap());
    let inv = RMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
    assert_eq!(numkit::null_space(&inv, 1e-12).unwrap().ncols(), 0);
}

#[test]
fn sys_b_row_deleted_kernel_at_its_zero() {
    let sys = common::fixture("sys_b.json");
    let sub = sys.row_deleted(0).unwrap();
    let p = pencil::rosenbrock_real(&sub, -3.0);
    let k = numkit::null_space(&p, 1e-10).unwrap();
    assert_eq!(k.ncols(), 2);
    let state = SubspaceBasis::span(&k.rows(0, 3).into_owned(), 1e-10).unwrap();
    let e23 = numkit::sum_of(3, [&line(e(3, 1)), &line(e(3, 2))], 1e-12).unwrap();
    assert!(state.same_as(&e23, 1e-10).unwrap());
    // The printed kernel basis [0 0; 1 0; 0 -8; 0 -10; 0 7] lies in it.
    let printed = RMatrix::from_row_slice(5, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, -8.0, 0.0, -10.0, 0.0, 7.0]);
    assert!((&p * printed).amax() < 1e-12);
}

#[test]
fn sum_dimensions() {
    let a = line(e(3, 0));
    let b = line(e(3, 1));
    assert_eq!(numkit::sum_dim(3, [&a, &a], 1e-12).unwrap(), 1);
    assert_eq!(numkit::sum_dim(3, [&a, &b], 1e-12).unwrap(), 2);
    let sys = common::fixture("sys_c.json");
    let r1 = line(CVector::from_vec(vec![c(0.0), c(-4.0 / 3.0), c(1.0), c(0.0)]));
    let r2 = line(CVector::from_vec(vec![c(6.3), c(-0.8), c(1.0), c(2.1)]));
    assert_eq!(numkit::sum_dim(sys.n(), [&r1, &r2], 1e-10).unwrap(), 2);
}

#[test]
fn affine_sets() {
    let id = CMatrix::identity(2, 2);
    let s = numkit::affine_solution_set(&id, &e(2, 0), 1e-12).unwrap().feasible().unwrap();
    assert_eq!(s.particular, e(2, 0));
    assert_eq!(s.directions.ncols(), 0);

    let row = RMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let s = numkit::affine_solution_set(&row, &DVector::zeros(1), 1e-12).unwrap().feasible().unwrap();
    assert_eq!(s.particular.norm(), 0.0);
    assert_eq!(s.directions.ncols(), 1);
    assert!(s.directions[(0, 0)].abs() < 1e-15);

    let zero = RMatrix::zeros(2, 2);
    assert!(numkit::affine_solution_set(&zero, &DVector::from_vec(vec![1.0, 0.0]), 1e-12)
        .unwrap()
        .feasible()
        .is_none());
}

#[test]
fn sys_b_least_norm_solution_at_the_zero() {
    // Pseudo-inverse solution with delta = 1 on the first output row: state
    // part [0, 0, -1/2], input part [-5/8, 7/16].
    let sys = common::fixture("sys_b.json");
    let p = pencil::rosenbrock_real(&sys, -3.0);
    let mut rhs = DVector::zeros(5);
    rhs[3] = 1.0;
    let s = numkit::affine_solution_set(&p, &rhs, 1e-10).unwrap().feasible().unwrap();
    let expected = [0.0, 0.0, -0.5, -5.0 / 8.0, 7.0 / 16.0];
    for (k, &x) in expected.iter().enumerate() {
        assert_relative_eq!(s.particular[k], x, epsilon = 1e-12);
    }
    assert_eq!(s.directions.ncols(), 1);
}

#[test]
fn eigen_examples() {
    let d = RMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
    let cl = numkit::eig_decomp(&d).unwrap();
    assert_eq!(cl.len(), 2);
    assert_relative_eq!(cl[0].value.re, 1.0, epsilon = 1e-14);
    assert!((cl[0].vectors[(1, 0)].norm() - 1.0).abs() < 1e-14);
    assert_relative_eq!(cl[1].value.re, 2.0, epsilon = 1e-14);

    let rot = RMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let vals = numkit::eigenvalues(&rot).unwrap();
    assert!((vals[0] - C64::new(0.0, -1.0)).norm() < 1e-14);
    assert!((vals[1] - C64::new(0.0, 1.0)).norm() < 1e-14);
    let cl = numkit::eig_decomp(&rot).unwrap();
    assert_eq!(cl[1].vectors, cl[0].vectors.map(|z| z.conj()));
    assert!(matches!(numkit::eigenvalues(&RMatrix::zeros(2, 3)), Err(Error::DimensionMismatch(_))));
}

#[test]
fn right_inverse_examples() {
    assert_eq!(numkit::right_inverse(&RMatrix::identity(2, 2), 1e-12).unwrap(), RMatrix::identity(2, 2));
    let r = numkit::right_inverse(&RMatrix::from_row_slice(1, 2, &[1.0, 0.0]), 1e-12).unwrap();
    assert_eq!(r, RMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
    let deficient = RMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
    assert!(matches!(numkit::right_inverse(&deficient, 1e-12), Err(Error::NotRightInvertible { .. })));
}

#[test]
fn loading_systems() {
    let b = common::fixture("sys_b.json");
    assert_eq!((b.n(), b.m(), b.p(), b.domain), (3, 2, 2, TimeDomain::Continuous));
    let c = common::fixture("sys_c.json");
    assert_eq!((c.n(), c.m(), c.p()), (4, 2, 2));
    assert!(matches!(
        sysmodel::load_system(r#"{"A": [], "B": [], "C": [], "domain": "continuous"}"#),
        Err(Error::Parse(_))
    ));
    assert!(matches!(
        sysmodel::load_system(r#"{"A": [[1, 0], [0]], "B": [[1], [1]], "C": [[1, 0]], "domain": "continuous"}"#),
        Err(Error::DimensionMismatch(_))
    ));
    assert!(matches!(sysmodel::load_system("{"), Err(Error::Parse(_))));
}

#[test]
fn normal_ranks() {
    // Full row rank n + p, checked at lambda = 1 directly.
    let b = common::fixture("sys_b.json");
    assert_eq!(numkit::rank_of(&pencil::rosenbrock_real(&b, 1.0), 1e-12).unwrap(), 5);
    assert_eq!(sysmodel::normal_rank_pencil(&b, 1e-10).unwrap(), 5);
    let c = common::fixture("sys_c.json");
    assert_eq!(numkit::rank_of(&pencil::rosenbrock_real(&c, 1.0), 1e-12).unwrap(), 6);
    assert_eq!(sysmodel::normal_rank_pencil(&c, 1e-10).unwrap(), 6);
    let blind = LtiSystem::new(b.a.clone(), b.b.clone(), RMatrix::zeros(2, 3), RMatrix::zeros(2, 2), TimeDomain::Continuous)
        .unwrap();
    assert_eq!(sysmodel::normal_rank_pencil(&blind, 1e-10).unwrap(), 3);
}

#[test]
fn standing_assumptions() {
    for name in ["sys_b.json", "sys_c.json"] {
        let sys = common::fixture(name);
        let r = sysmodel::validate_assumption1(&sys, &StabilityRegion::standard(sys.domain), 1e-10).unwrap();
        assert!(r.ok(), "{name}: {r:?}");
    }
    let one = |x: f64| RMatrix::from_element(1, 1, x);
    let sys = LtiSystem::new(one(1.0), one(0.0), one(1.0), one(0.0), TimeDomain::Continuous).unwrap();
    let r = sysmodel::validate_assumption1(&sys, &StabilityRegion::standard(sys.domain), 1e-10).unwrap();
    assert!(!r.stabilizable);
    // SYS-A has two dependent pencil rows: not right invertible.
    let a = common::fixture("sys_a.json");
    let r = sysmodel::validate_assumption1(&a, &StabilityRegion::standard(a.domain), 1e-10).unwrap();
    assert!(!r.right_invertible);
    // Integrator with a direct zero at the origin.
    let sys = LtiSystem::new(one(-1.0), one(1.0), one(0.0), one(0.0), TimeDomain::Continuous);
    assert!(sys.is_ok());
    let z = LtiSystem::new(
        RMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]),
        RMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        RMatrix::from_row_slice(1, 2, &[1.0, -0.5]),
        RMatrix::zeros(1, 1),
        TimeDomain::Continuous,
    )
    .unwrap();
    // C (sI - A)^-1 B = (s + 2 - 0.5 (s + 1)) / ((s+1)(s+2)) = 0.5 (s + 3) / ...: zero at -3, not 0.
    assert!(!sysmodel::validate_assumption1(&z, &StabilityRegion::standard(z.domain), 1e-10)
        .unwrap()
        .forbidden_point_is_zero);
    let at_origin = LtiSystem::new(z.a.clone(), z.b.clone(), RMatrix::from_row_slice(1, 2, &[1.0, -1.0]), RMatrix::zeros(1, 1), TimeDomain::Continuous)
        .unwrap();
    // 1/(s+1) - 1/(s+2) = 1/((s+1)(s+2)): no finite zero at all.
    assert!(!sysmodel::validate_assumption1(&at_origin, &StabilityRegion::standard(z.domain), 1e-10)
        .unwrap()
        .forbidden_point_is_zero);
    let origin = LtiSystem::new(z.a.clone(), z.b.clone(), RMatrix::from_row_slice(1, 2, &[1.0, -2.0]), RMatrix::zeros(1, 1), TimeDomain::Continuous)
        .unwrap();
    // 1/(s+1) - 2/(s+2) = -s/((s+1)(s+2)): zero at the origin.
    assert!(matches!(
        sysmodel::require_assumption1(&origin, &StabilityRegion::standard(z.domain), 1e-10),
        Err(Error::ForbiddenZero(_))
    ));
}

#[test]
fn rosenbrock_blocks() {
    let sys = common::fixture("sys_b.json");
    let p = pencil::rosenbrock_real(&sys, 0.0);
    assert_eq!(p.view((0, 0), (3, 3)).into_owned(), sys.a);
    let z = C64::new(-0.7, 1.3);
    assert_eq!(pencil::rosenbrock(&sys, z.conj()), pencil::rosenbrock(&sys, z).map(|x| x.conj()));
    assert_eq!(numkit::rank_of(&pencil::rosenbrock_real(&sys, -3.0), 1e-10).unwrap(), 4);
}

#[test]
fn zeros_of_sys_b() {
    let zs = pencil::invariant_zeros(&common::fixture("sys_b.json"), 1e-10).unwrap();
    assert_eq!(zs.normal_rank, 5);
    assert_eq!(zs.zeros.len(), 1);
    let z = &zs.zeros[0];
    assert!((z.z() - c(-3.0)).norm() < 1e-6);
    assert_eq!((z.geometric, z.algebraic), (1, 1));
}

/// det P(s) of SYS-C expanded by hand: -4 (s + 21)(s^2 + 4 s + 16).
fn sys_c_det(s: C64) -> C64 {
    -4.0 * (s + 21.0) * (s * s + 4.0 * s + 16.0)
}

#[test]
fn sys_c_determinant_oracle() {
    let sys = common::fixture("sys_c.json");
    for s in [c(0.3), c(-2.5), C64::new(1.0, 2.0), C64::new(-7.0, -0.5)] {
        let det = pencil::rosenbrock(&sys, s).determinant();
        assert!((det - sys_c_det(s)).norm() < 1e-9 * sys_c_det(s).norm());
    }
}

#[test]
fn zeros_of_sys_c() {
    let sys = common::fixture("sys_c.json");
    let zs = pencil::invariant_zeros(&sys, 1e-10).unwrap();
    let pair = C64::new(-2.0, 2.0 * 3f64.sqrt());
    let expected = [c(-21.0), pair.conj(), pair];
    assert_eq!(zs.zeros.len(), 3);
    for (z, want) in zs.zeros.iter().zip(expected) {
        assert!((z.z() - want).norm() < 1e-6, "{} vs {want}", z.z());
        assert_eq!((z.geometric, z.algebraic), (1, 1));
        assert!(sys_c_det(want).norm() < 1e-9);
    }
    let region = StabilityRegion::standard(sys.domain);
    assert_eq!(pencil::minimum_phase_zeros(&zs, &region).len(), 3);
}

#[test]
fn sys_a_has_no_zeros() {
    let sys = common::fixture("sys_a.json");
    let zs = pencil::invariant_zeros(&sys, 1e-10).unwrap();
    assert_eq!(zs.normal_rank, 3);
    assert!(zs.zeros.is_empty());
    // Brute-force scan: the pencil keeps rank 3 over a grid of the plane.
    for re in -10..=10 {
        for im in -3..=3 {
            let s = C64::new(re as f64 * 0.7, im as f64 * 0.9);
            assert_eq!(numkit::rank_of(&pencil::rosenbrock(&sys, s), 1e-10).unwrap(), 3);
        }
    }
}

#[test]
fn minimum_phase_filters() {
    let zs = pencil::ZeroStructure {
        normal_rank: 2,
        zeros: vec![
            pencil::InvariantZero { value: c(2.0).into(), algebraic: 1, geometric: 1 },
            pencil::InvariantZero { value: c(0.5).into(), algebraic: 1, geometric: 1 },
        ],
    };
    let cont = pencil::minimum_phase_zeros(&zs, &StabilityRegion::standard(TimeDomain::Continuous));
    assert!(cont.is_empty());
    let disc = pencil::minimum_phase_zeros(&zs, &StabilityRegion::standard(TimeDomain::Discrete));
    assert_eq!(disc.len(), 1);
    assert_eq!(disc[0].z(), c(0.5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rank_is_orthogonally_invariant(seed in any::<u64>(), rows in 1usize..7, cols in 1usize..7, r in 0usize..7) {
        let mut rng = common::rng(seed);
        let r = r.min(rows).min(cols);
        let m = common::gauss(&mut rng, rows, r) * common::gauss(&mut rng, r, cols);
        let q1 = random_orthogonal(&mut rng, rows);
        let q2 = random_orthogonal(&mut rng, cols);
        let k = numkit::rank_of(&m, 1e-10).unwrap();
        prop_assert_eq!(k, r);
        prop_assert_eq!(numkit::rank_of(&(&q1 * &m * &q2), 1e-10).unwrap(), k);
        prop_assert_eq!(k + numkit::null_space(&m, 1e-10).unwrap().ncols(), cols);
    }

    #[test]
    fn subspace_sums_are_order_free_and_monotone(seed in any::<u64>(), dims in proptest::collection::vec(0usize..3, 1..5)) {
        let mut rng = common::rng(seed);
        let n = 5;
        let parts: Vec<SubspaceBasis> = dims
            .iter()
            .map(|&d| SubspaceBasis::span(&numkit::to_complex(&common::gauss(&mut rng, n, d)), 1e-12).unwrap())
            .collect();
        let forward = numkit::sum_dim(n, parts.iter(), 1e-10).unwrap();
        prop_assert_eq!(numkit::sum_dim(n, parts.iter().rev(), 1e-10).unwrap(), forward);
        prop_assert_eq!(forward, dims.iter().sum::<usize>().min(n));
        for k in 1..parts.len() {
            prop_assert!(numkit::sum_dim(n, parts[..k].iter(), 1e-10).unwrap() <= numkit::sum_dim(n, parts[..=k].iter(), 1e-10).unwrap());
        }
    }

    #[test]
    fn affine_points_solve_the_system(seed in any::<u64>(), rows in 1usize..5, extra in 0usize..4) {
        let mut rng = common::rng(seed);
        let m = common::gauss(&mut rng, rows, rows + extra);
        let b = common::gauss(&mut rng, rows, 1).column(0).into_owned();
        let s = numkit::affine_solution_set(&m, &b, 1e-10).unwrap().feasible().unwrap();
        let k = common::gauss(&mut rng, s.directions.ncols(), 1).column(0).into_owned();
        let x = &s.particular + &s.directions * k;
        prop_assert!((&m * x - &b).norm() <= 100.0 * 1e-10 * (1.0 + b.norm()) * m.norm());
        let r = numkit::right_inverse(&m, 1e-10).unwrap();
        prop_assert!((&m * r - RMatrix::identity(rows, rows)).amax() <= 100.0 * 1e-10 * m.norm().max(1.0));
    }

    #[test]
    fn region_is_self_conjugate(re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let z = C64::new(re, im);
        for r in ["lhp", "lhp:-0.5", "disc", "disc:0.8"] {
            let region = StabilityRegion::parse(r).unwrap();
            prop_assert_eq!(region.contains(z), region.contains(z.conj()));
        }
    }

    #[test]
    fn systems_round_trip_through_json(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let sys = common::random_system(&mut rng, 3, 2);
        let text = serde_json::to_string(&SystemFile::from_system(&sys)).unwrap();
        let back = sysmodel::load_system(&text).unwrap();
        prop_assert_eq!(back.a, sys.a);
        prop_assert_eq!(back.b, sys.b);
        prop_assert_eq!(back.c, sys.c);
        prop_assert_eq!(back.d, sys.d);
    }

    #[test]
    fn right_invertibility_ignores_output_order(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let sys = common::random_system(&mut rng, 4, 2);
        let swap = RMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let permuted = LtiSystem::new(sys.a.clone(), sys.b.clone(), &swap * &sys.c, &swap * &sys.d, sys.domain).unwrap();
        let region = StabilityRegion::standard(sys.domain);
        prop_assert_eq!(
            sysmodel::validate_assumption1(&permuted, &region, 1e-10).unwrap().right_invertible,
            sysmodel::validate_assumption1(&sys, &region, 1e-10).unwrap().right_invertible
        );
    }

    #[test]
    fn zeros_survive_coordinate_changes(seed in any::<u64>(), n in 3usize..7) {
        let mut rng = common::rng(seed);
        let sys = common::random_system(&mut rng, n, 2);
        let t = random_orthogonal(&mut rng, n) * RMatrix::from_diagonal(&DVector::from_fn(n, |k, _| 1.0 + 0.3 * k as f64));
        let moved = sys.similarity(&t).unwrap();
        let a = pencil::invariant_zeros(&sys, 1e-10).unwrap().multiset();
        let b = pencil::invariant_zeros(&moved, 1e-10).unwrap().multiset();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).norm() <= 1e-6 * (1.0 + x.norm()), "{} vs {}", x, y);
        }
    }

    #[test]
    fn zero_structure_is_consistent(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = common::rng(seed);
        let sys = common::random_system(&mut rng, n, 2);
        let zs = pencil::invariant_zeros(&sys, 1e-10).unwrap();
        for z in &zs.zeros {
            prop_assert!(z.geometric <= z.algebraic);
            let rank = numkit::rank_of(&pencil::rosenbrock(&sys, z.z()), pencil::ZERO_RTOL).unwrap();
            prop_assert_eq!(rank, zs.normal_rank - z.geometric);
            let conj = zs.find(z.z().conj());
            prop_assert!(conj.is_some_and(|w| w.algebraic == z.algebraic && w.geometric == z.geometric));
        }
    }
}
