use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use sse_core::linalg::max_eigenvalue;
use sse_core::lmi::*;
use sse_core::lure::{LureSystem, Nonlinearity};
use sse_core::observer::{enumerate_subsets, SensorSubset, SubsetFamily, SubsetKind};

fn scalar_system(a: f64, b: f64, c: f64) -> LureSystem {
    let m = |v| DMatrix::from_element(1, 1, v);
    LureSystem::new(
        m(a),
        m(b),
        m(c),
        DVector::from_element(1, 1.0),
        vec![Nonlinearity::Affine { slope: 1.0, offset: 0.0 }],
    )
    .unwrap()
}

fn single_observer(n_c: usize) -> SubsetFamily {
    SubsetFamily {
        n_c,
        n_a: 0,
        supers: vec![SensorSubset { indices: (0..n_c).collect(), kind: SubsetKind::Super }],
        subs: vec![],
        sub_of: vec![vec![]],
    }
}

fn m1(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn sym_from_lower(n: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for &(r, c, v) in entries {
        m[(r - 1, c - 1)] = v;
        m[(c - 1, r - 1)] = v;
    }
    m
}

#[test]
fn single_observer_lift_is_identity() {
    let sys = scalar_system(-1.0, 1.0, 1.0);
    let bm = build_block_matrices(&sys, &single_observer(1)).unwrap();
    assert_eq!(bm.big_a, sys.a);
    assert_eq!(bm.c_star, sys.c);
}

#[test]
fn reduced_bank_has_six_copies() {
    let g = sse_core::lure::GridTopology::benchmark_feeder().truncated(3).unwrap();
    let sys = g.build_lure().unwrap();
    let bm = build_block_matrices(&sys, &enumerate_subsets(3, 1).unwrap()).unwrap();
    assert_eq!(bm.big_a.shape(), (18, 18));
    for o in 0..6 {
        assert_eq!(bm.big_a.view((3 * o, 3 * o), (3, 3)), sys.a);
    }
    assert_eq!(bm.c_star.shape(), (3 * 2 + 3, 18));
}

#[test]
fn full_bank_measurement_count() {
    let sys = sse_core::lure::GridTopology::benchmark_feeder().build_lure().unwrap();
    let fam = enumerate_subsets(5, 2).unwrap();
    let bm = build_block_matrices(&sys, &fam).unwrap();
    // ten triples and five singletons
    assert_eq!(bm.c_star.shape(), (10 * 3 + 5, 75));
}

#[test]
fn lmi7_scalar_by_hand() {
    let bm = build_block_matrices(&scalar_system(-1.0, 1.0, 1.0), &single_observer(1)).unwrap();
    let q = assemble_lmi7(&bm, &m1(1.0), &m1(1.0), &m1(0.5), &m1(0.25), 0.1, 2.0, 3.0, Lmi7Variant::Corrected).unwrap();
    let expected = sym_from_lower(
        7,
        &[
            (1, 1, -1.9),
            (2, 1, 0.5),
            (3, 1, 2.0),
            (3, 3, -2.0),
            (4, 1, 1.25),
            (4, 4, -2.0),
            (5, 1, 1.0),
            (5, 5, -2.0),
            (6, 1, 1.0),
            (6, 6, -3.0),
            (7, 2, -0.25),
            (7, 7, -1.0),
        ],
    );
    assert_relative_eq!(q, expected, epsilon = 1e-15);
    let printed =
        assemble_lmi7(&bm, &m1(1.0), &m1(1.0), &m1(0.5), &m1(0.25), 0.1, 2.0, 3.0, Lmi7Variant::Printed).unwrap();
    assert_eq!(printed[(6, 6)], 1.0);
}

#[test]
fn lmi7_zero_inputs_except_nu() {
    let sys = scalar_system(-1.0, 1.0, 1.0);
    let bm = build_block_matrices(&sys, &single_observer(1)).unwrap();
    let z = m1(0.0);
    let q = assemble_lmi7(&bm, &z, &z, &z, &z, 1.0, 0.0, 0.0, Lmi7Variant::Corrected).unwrap();
    let mut expected = DMatrix::zeros(7, 7);
    expected[(0, 0)] = 1.0;
    assert_eq!(q, expected);
}

fn hand_n() -> [DMatrix<f64>; 6] {
    core::array::from_fn(|i| m1(0.1 * (i + 1) as f64))
}

#[test]
fn lmi8_scalar_by_hand() {
    let bm = build_block_matrices(&scalar_system(-1.0, 1.0, 1.0), &single_observer(1)).unwrap();
    let q = assemble_lmi8(&bm, &m1(1.0), &m1(2.0), &hand_n(), &m1(0.5), 2.0, Lmi89Variant::Printed).unwrap();
    let expected = sym_from_lower(
        8,
        &[
            (1, 1, -1.8),
            (2, 1, 2.1),
            (2, 2, -2.4),
            (3, 1, 0.3),
            (3, 2, -0.3),
            (4, 1, 0.4),
            (4, 2, -0.4),
            (5, 1, 0.5),
            (5, 2, -0.5),
            (6, 1, 0.6),
            (6, 2, -0.6),
            (7, 1, -1.0),
            (7, 2, 0.5),
            (7, 3, 1.0),
            (7, 4, 1.0),
            (7, 5, 1.0),
            (7, 6, 1.0),
            (7, 7, -0.5),
            (8, 1, 0.1),
            (8, 2, 0.2),
            (8, 3, 0.3),
            (8, 4, 0.4),
            (8, 5, 0.5),
            (8, 6, 0.6),
            (8, 8, -0.5),
        ],
    );
    assert_relative_eq!(q, expected, epsilon = 1e-14);
}

#[test]
fn lmi9_scalar_by_hand() {
    let bm = build_block_matrices(&scalar_system(-1.0, 1.0, 1.0), &single_observer(1)).unwrap();
    let q = assemble_lmi9(&bm, &m1(1.0), &m1(2.0), &hand_n(), &m1(0.5), 2.0, Lmi89Variant::Printed).unwrap();
    let expected = sym_from_lower(
        7,
        &[
            (1, 1, -9.8),
            (2, 1, 8.1),
            (2, 2, -6.4),
            (3, 1, 4.3),
            (3, 2, -4.3),
            (4, 1, 4.4),
            (4, 2, -4.4),
            (5, 1, 4.5),
            (5, 2, -4.5),
            (6, 1, 4.6),
            (6, 2, -4.6),
            (7, 1, -1.0),
            (7, 2, 0.5),
            (7, 3, 1.0),
            (7, 4, 1.0),
            (7, 5, 1.0),
            (7, 6, 1.0),
            (7, 7, -0.5),
        ],
    );
    assert_relative_eq!(q, expected, epsilon = 1e-14);
}

#[test]
fn lmi8_identity_p3_gives_minus_identity_corner() {
    let sys = sse_core::lure::GridTopology::benchmark_feeder().truncated(3).unwrap().build_lure().unwrap();
    let bm = build_block_matrices(&sys, &enumerate_subsets(3, 1).unwrap()).unwrap();
    let n = bm.dim();
    let zero: [DMatrix<f64>; 6] = core::array::from_fn(|_| DMatrix::zeros(n, n));
    let gains = GainDesign::zeros(&bm);
    let q = assemble_lmi8(
        &bm,
        &DMatrix::identity(n, n),
        &DMatrix::identity(n, n),
        &zero,
        &gains.l,
        1.0,
        Lmi89Variant::Printed,
    )
    .unwrap();
    assert_eq!(q.view((0, 0), (n, n)), -DMatrix::<f64>::identity(n, n));
}

#[test]
fn lmi9_small_sampling_limit_matches_lmi8_corner() {
    let bm = build_block_matrices(&scalar_system(-1.0, 1.0, 1.0), &single_observer(1)).unwrap();
    let nm = hand_n();
    let t = 1e-9;
    let q8 = assemble_lmi8(&bm, &m1(1.0), &m1(2.0), &nm, &m1(0.5), t, Lmi89Variant::Printed).unwrap();
    let q9 = assemble_lmi9(&bm, &m1(1.0), &m1(2.0), &nm, &m1(0.5), t, Lmi89Variant::Printed).unwrap();
    assert_relative_eq!(q9[(0, 0)], q8[(0, 0)], epsilon = 1e-8);
}

#[test]
fn nonpositive_sampling_bound_is_rejected() {
    let bm = build_block_matrices(&scalar_system(-1.0, 1.0, 1.0), &single_observer(1)).unwrap();
    for t in [0.0, -1.0] {
        assert!(assemble_lmi8(&bm, &m1(1.0), &m1(1.0), &hand_n(), &m1(0.0), t, Lmi89Variant::Printed).is_err());
        assert!(assemble_lmi9(&bm, &m1(1.0), &m1(1.0), &hand_n(), &m1(0.0), t, Lmi89Variant::Printed).is_err());
    }
}

#[test]
fn shape_mismatch_is_reported() {
    let bm = build_block_matrices(&scalar_system(-1.0, 1.0, 1.0), &single_observer(1)).unwrap();
    let big = DMatrix::identity(2, 2);
    let r = assemble_lmi7(&bm, &big, &m1(1.0), &m1(0.0), &m1(0.0), 1.0, 1.0, 1.0, Lmi7Variant::Corrected);
    assert!(matches!(r, Err(sse_core::Error::Dimension(_))));
}

#[test]
fn printed_sign_has_positive_eigenvalue() {
    let bm = build_block_matrices(&scalar_system(-1.0, 1.0, 1.0), &single_observer(1)).unwrap();
    for u in [1e-6, 1.0, 50.0] {
        let q = assemble_lmi7(&bm, &m1(1.0), &m1(u), &m1(0.0), &m1(0.0), 1.0, 1.0, 1.0, Lmi7Variant::Printed).unwrap();
        assert!(max_eigenvalue(&q) >= u);
    }
}
