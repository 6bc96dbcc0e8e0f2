use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sse_core::linalg::{max_eigenvalue, symmetrize};
use sse_core::lmi::*;
use sse_core::lure::{GridTopology, LureSystem, Nonlinearity};
use sse_core::observer::enumerate_subsets;
use sse_core::Error;

fn reduced_grid() -> BlockMatrices {
    let sys = GridTopology::benchmark_feeder().truncated(3).unwrap().build_lure().unwrap();
    build_block_matrices(&sys, &enumerate_subsets(3, 1).unwrap()).unwrap()
}

fn scalar_bank(a: f64, b: f64, c: f64) -> BlockMatrices {
    let m = |v| DMatrix::from_element(1, 1, v);
    let sys = LureSystem::new(
        m(a),
        m(b),
        m(c),
        DVector::from_element(1, 1.0),
        vec![Nonlinearity::Affine { slope: 1.0, offset: 0.0 }],
    )
    .unwrap();
    build_block_matrices(&sys, &enumerate_subsets(1, 0).unwrap()).unwrap()
}

#[test]
fn stable_scalar_is_feasible_without_gains() {
    let bm = scalar_bank(-1.0, 0.0, 1.0);
    let (c1, gains) = solve_stage1(&bm, &SynthesisSettings::default()).unwrap();
    assert!(gains.k.amax() < 1e-9 && gains.l.amax() < 1e-9);
    assert!(c1.nu > 0.0 && c1.u.min() > 0.0);
}

#[test]
fn unstable_undetectable_scalar_is_infeasible() {
    let bm = scalar_bank(1.0, 1.0, 0.0);
    match solve_stage1(&bm, &SynthesisSettings::default()) {
        Err(Error::Infeasible(report)) => {
            assert_eq!(report.stage, 1);
            assert!(report.margin.unwrap() < 0.0);
        }
        other => panic!("expected infeasibility, got {other:?}"),
    }
}

#[test]
fn reduced_grid_stage1_matches_reference_solver() {
    // Margin of the same reduced problem solved by an independent conic solver
    // (unscaled C, caps of 10).
    let settings = SynthesisSettings { scalar_cap: 10.0, scale_c: false, ..Default::default() };
    let out = design_stage1(&reduced_grid(), &settings).unwrap();
    assert!((out.margin - 0.768242).abs() < 1e-5, "margin {}", out.margin);
}

#[test]
fn reduced_grid_stage1_margins_are_rechecked() {
    let bm = reduced_grid();
    let out = design_stage1(&bm, &SynthesisSettings::default()).unwrap();
    assert!(out.feasible);
    assert!(out.reduced_lambda_max <= -1e-6);
    assert!((out.reduced_lambda_max + out.margin).abs() < 1e-6 * (1.0 + out.margin));
    // The rows of the zero (2,2) block stay exactly singular.
    assert!(out.full_lambda_max.abs() < 1e-9);
    assert_eq!(out.removed_rows, 3);
    for (g, s) in out.gains.per_subset.iter().zip(bm.family.all()) {
        assert_eq!(g.k.shape(), (3, s.len()));
        assert_eq!(g.l.shape(), (3, s.len()));
    }
}

#[test]
fn substitution_is_exact() {
    let bm = reduced_grid();
    let out = design_stage1(&bm, &SynthesisSettings::default()).unwrap();
    let c = &out.certificate;
    let u = c.u_matrix();
    let subst = assemble_lmi7(&bm, &c.p1, &u, &c.p1_l, &c.u_k, c.nu, c.mu_d, c.mu_w, Lmi7Variant::Corrected).unwrap();
    let recovered = assemble_lmi7(
        &bm,
        &c.p1,
        &u,
        &(&c.p1 * &out.gains.l),
        &(&u * &out.gains.k),
        c.nu,
        c.mu_d,
        c.mu_w,
        Lmi7Variant::Corrected,
    )
    .unwrap();
    assert!((subst - recovered).amax() < 1e-12);
}

#[test]
fn full_condition_is_union_of_observer_blocks() {
    let bm = reduced_grid();
    let out = design_stage1(&bm, &SynthesisSettings::default()).unwrap();
    let c = &out.certificate;
    let full = assemble_lmi7(&bm, &c.p1, &c.u_matrix(), &c.p1_l, &c.u_k, c.nu, c.mu_d, c.mu_w, Lmi7Variant::Corrected)
        .unwrap();
    let (n, n_c) = (bm.dim(), bm.n_c);
    let mut worst = f64::NEG_INFINITY;
    for o in 0..bm.n_observers {
        let idx: Vec<usize> = (0..7).flat_map(|b| (0..n_c).map(move |k| b * n + o * n_c + k)).collect();
        worst = worst.max(max_eigenvalue(&full.select_rows(idx.iter()).select_columns(idx.iter())));
    }
    assert!((worst - max_eigenvalue(&full)).abs() < 1e-10);
}

#[test]
fn reduced_grid_stage2_reports_structural_obstruction() {
    let bm = reduced_grid();
    let (_, gains) = solve_stage1(&bm, &SynthesisSettings::default()).unwrap();
    let out = design_stage2(&bm, &gains, 1.0, &SynthesisSettings::default()).unwrap();
    assert!(!out.feasible);
    assert!(out.margin < 0.0);
    let ob = out.obstruction.expect("zero diagonal block should be found");
    assert_eq!(ob.row / bm.n_c, 2);
    match solve_stage2(&bm, &gains, 1.0, &SynthesisSettings::default()) {
        Err(Error::Infeasible(r)) => assert_eq!(r.stage, 2),
        other => panic!("expected infeasibility, got {other:?}"),
    }
    // The least-violation certificate is what the eigenvalue re-check sees.
    assert!((out.lmi8_lambda_max.max(out.lmi9_lambda_max) + out.margin).abs() < 1e-6);
}

#[test]
fn bisection_returns_none_when_never_feasible() {
    let bm = reduced_grid();
    let gains = GainDesign::zeros(&bm);
    let r = max_feasible_t_bar(&bm, &gains, 1e-3, 1.0, 4, &SynthesisSettings::default()).unwrap();
    assert_eq!(r, None);
}

#[test]
fn verification_detects_perturbed_certificate() {
    let bm = reduced_grid();
    let settings = SynthesisSettings::default();
    let out = design_stage1(&bm, &settings).unwrap();
    let stage2 = design_stage2(&bm, &out.gains, 1.0, &settings).unwrap();
    let base = verify_certificates(&bm, &out.gains, &out.certificate, &stage2.certificate, &settings).unwrap();
    assert!(base.lmi7_lambda_max <= 1e-9);
    assert!(base.lmi7_printed_lambda_max > 0.0);
    assert!(base.gain_mismatch < 1e-10);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = bm.dim();
    let noise = symmetrize(&DMatrix::from_fn(n, n, |_, _| rng.random_range(-10.0..10.0)));
    let mut bad = out.certificate.clone();
    bad.p1 += noise;
    let r = verify_certificates(&bm, &out.gains, &bad, &stage2.certificate, &settings).unwrap();
    assert!(!r.passed());
    assert!(r.failures.iter().any(|f| f.contains("first condition") || f.contains("P₁")));
}

#[test]
fn zeroed_gains_are_flagged_as_mismatch() {
    let bm = reduced_grid();
    let settings = SynthesisSettings::default();
    let out = design_stage1(&bm, &settings).unwrap();
    let stage2 = design_stage2(&bm, &out.gains, 1.0, &settings).unwrap();
    let mut c1 = out.certificate.clone();
    c1.p1_l[(0, 0)] += 1.0;
    let r = verify_certificates(&bm, &GainDesign::zeros(&bm), &c1, &stage2.certificate, &settings).unwrap();
    assert!(r.gain_mismatch > 1e-3);
}
