//! Acceptance criteria, run as one binary (`cargo test --test acceptance`).
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use sse::commands::{run_design, run_simulation, DesignRun};
use sse::config::{FEEDER, REDUCED};
use sse::Config;
use sse_core::channel::{AttackScenario, SamplingSchedule};
use sse_core::lmi::{
    assemble_lmi7, assemble_lmi8, assemble_lmi9, build_block_matrices, design_stage1, design_stage2, BlockMatrices,
    CertificateStage1, CertificateStage2, GainDesign, Lmi7Variant,
};
use sse_core::lure::{LureSystem, Nonlinearity};
use sse_core::lyapunov::{
    assemble_q_family, check_jump_condition, check_sandwich, lyapunov_series, sandwich_bounds, schur_implication_check,
};
use sse_core::observer::{enumerate_subsets, ObserverBank, ObserverGains};
use sse_core::signal::Signal;
use sse_core::sim::{integrate, sup_error_after, InitialEstimate, InitialState, InputModel, Scenario};

const MARGIN: f64 = -1e-6;
const SCHUR_TOL: f64 = 1e-8;
const REL_TOL: f64 = 1e-8;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Largest eigenvalue through nalgebra's symmetric eigensolver, not the core crate's.
fn lambda_max(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.max()
}

fn config(text: &str, overrides: &[&str]) -> Config {
    let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    Config::from_toml(text, &ov).expect("bundled config parses")
}

fn block_matrices(cfg: &Config) -> (Scenario, BlockMatrices) {
    let sc = cfg.scenario().unwrap();
    let bm = build_block_matrices(&sc.system, &cfg.family().unwrap()).unwrap();
    (sc, bm)
}

fn reduced_design() -> &'static DesignRun {
    static D: OnceLock<DesignRun> = OnceLock::new();
    D.get_or_init(|| run_design(&config(REDUCED, &[])).unwrap())
}

fn full_design() -> &'static DesignRun {
    static D: OnceLock<DesignRun> = OnceLock::new();
    D.get_or_init(|| run_design(&config(FEEDER, &[])).unwrap())
}

fn certificates(d: &DesignRun) -> (GainDesign, CertificateStage1, Option<CertificateStage2>) {
    (d.file.gains().unwrap(), d.file.stage1_certificate().unwrap(), d.file.stage2_certificate().unwrap())
}

/// Reduced bank, both stages, independent eigenvalue re-check, under 60 s.
fn criterion_1() -> Outcome {
    let cfg = config(REDUCED, &[]);
    let (_, bm) = block_matrices(&cfg);
    let settings = cfg.synthesis_settings();
    let start = Instant::now();
    let s1 = design_stage1(&bm, &settings).unwrap();
    let s2 = design_stage2(&bm, &s1.gains, cfg.sampling.t_bar_s, &settings).unwrap();
    let elapsed = start.elapsed();

    let c = &s1.certificate;
    let (g, m) = (&c.p1 * &s1.gains.l, c.u_matrix() * &s1.gains.k);
    let lmi7 = assemble_lmi7(&bm, &c.p1, &c.u_matrix(), &g, &m, c.nu, c.mu_d, c.mu_w, Lmi7Variant::Corrected).unwrap();
    let l7 = lambda_max(&lmi7);
    let c2 = &s2.certificate;
    let l8 = lambda_max(&assemble_lmi8(&bm, &c2.p2, &c2.p3, &c2.n, &s1.gains.l, c2.t_bar, settings.lmi89).unwrap());
    let l9 = lambda_max(&assemble_lmi9(&bm, &c2.p2, &c2.p3, &c2.n, &s1.gains.l, c2.t_bar, settings.lmi89).unwrap());
    let pass = l7 <= MARGIN && l8 <= MARGIN && l9 <= MARGIN && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "lambda_max first = {l7:.3e} (reduced face {:.3e}), second = {l8:.3e}, third = {l9:.3e}, need <= {MARGIN:e}; {:.1} s",
            s1.reduced_lambda_max,
            elapsed.as_secs_f64()
        ),
    )
}

/// Qbar(tau) on 101 points, Q1 - Q2 at 50 sector samples, R identities.
fn criterion_2() -> Outcome {
    let cfg = config(REDUCED, &[]);
    let (_, bm) = block_matrices(&cfg);
    let d = reduced_design();
    let (gains, c1, c2) = certificates(d);
    let Some(c2) = c2 else { return outcome(false, "no stage-2 certificate") };
    let qf = assemble_q_family(&bm, &gains, &c1, &c2).unwrap();
    let t_bar = c2.t_bar;

    let worst = (0..101)
        .map(|i| {
            let tau = t_bar * i as f64 / 100.0;
            lambda_max(&(&qf.r1 + &qf.r2 * tau + &qf.r3 * (t_bar - tau)))
        })
        .fold(f64::NEG_INFINITY, f64::max);

    let direct = lambda_max(&(qf.q(1) - qf.q(2)));
    let sc = schur_implication_check(&bm, &gains, &qf, 50, 2024);

    let r1 = qf.q(3) * t_bar + qf.q(5) + qf.q(6);
    let scale = 1.0 + qf.r1.amax();
    let identities = (&qf.r1 - r1).amax() <= 1e-12 * scale && qf.r2 == *qf.q(4) && qf.r3 == *qf.q(7);
    // Qbar is affine in tau, so any tau interpolates the endpoints
    let affine = [0.13, 0.5, 0.91].iter().all(|&s| {
        let q = qf.qbar(s * t_bar);
        let lin = qf.qbar(0.0) * (1.0 - s) + qf.qbar(t_bar) * s;
        (q - lin).amax() <= 1e-10 * scale
    });

    let pass = worst < 0.0 && direct <= SCHUR_TOL && sc.worst_restricted <= SCHUR_TOL && identities && affine;
    outcome(
        pass,
        format!(
            "worst lambda_max Qbar = {worst:.3e}; Q1 - Q2 = {direct:.3e} (restricted {:.3e} over {}); R identities {}, affine {}",
            sc.worst_restricted,
            sc.samples,
            if identities { "exact" } else { "off" },
            if affine { "yes" } else { "no" }
        ),
    )
}

/// Sandwich and jump conditions along 10 seeded runs.
fn criterion_3() -> Outcome {
    let d = reduced_design();
    let (gains, c1, c2) = certificates(d);
    let Some(c2) = c2 else { return outcome(false, "no stage-2 certificate") };
    let bounds = sandwich_bounds(&c1, &c2);
    let (mut checked, mut lower, mut upper, mut jumps, mut jump_bad) = (0, 0, 0, 0, 0);
    let mut v1_err: f64 = 0.0;
    for seed in 0..10u64 {
        let cfg = config(REDUCED, &["amplitude_V2=100"]);
        let mut sc = cfg.scenario().unwrap();
        sc.seed = seed;
        let bank = gains.bank(&cfg.family().unwrap()).unwrap();
        let traj = integrate(&sc, &bank).unwrap();
        let points = traj.error_points();
        let series = lyapunov_series(&points, &c1, &c2).unwrap();
        for (p, s) in points.iter().zip(&series).step_by(97) {
            let v1 = (p.z.transpose() * &c1.p1 * &p.z)[(0, 0)];
            v1_err = v1_err.max((v1 - s.v1).abs() / (1.0 + v1.abs()));
        }
        let sw = check_sandwich(&series, bounds, REL_TOL);
        let jp = check_jump_condition(&points, &series, REL_TOL);
        checked += sw.checked;
        lower += sw.lower_violations;
        upper += sw.upper_violations;
        jumps += jp.checked;
        jump_bad += jp.violations;
    }
    let pass = lower == 0 && upper == 0 && jump_bad == 0 && jumps > 0 && v1_err < 1e-12;
    outcome(
        pass,
        format!(
            "sandwich: {lower} lower / {upper} upper violations of {checked}; jump: {jump_bad} violations of {jumps}; V1 recheck {v1_err:.1e}"
        ),
    )
}

/// Attack scales {0, 1, 10}: sup error after 5 s within a factor-2 band.
fn criterion_4() -> Outcome {
    let cfg = config(REDUCED, &[]);
    let d = reduced_design();
    let start = Instant::now();
    let sups: Vec<f64> = [0.0, 1.0, 10.0]
        .iter()
        .map(|&c| sup_error_after(&run_simulation(&cfg, &d.file, c).unwrap().trajectory, 5.0).unwrap())
        .collect();
    let elapsed = start.elapsed();
    let (lo, hi) = sups.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
    let pass = hi <= 2.0 * lo && elapsed < Duration::from_secs(300);
    let shown: Vec<String> = sups.iter().map(|s| format!("{s:.4e}")).collect();
    outcome(
        pass,
        format!(
            "sup |x~| after 5 s = [{}] (max/min = {:.3}); {:.1} s",
            shown.join(", "),
            hi / lo,
            elapsed.as_secs_f64()
        ),
    )
}

/// Full (5, 2) bank RMS voltage error in [0.005, 0.1] V.
fn criterion_5() -> Outcome {
    let cfg = config(FEEDER, &[]);
    let d = full_design();
    let run = run_simulation(&cfg, &d.file, 1.0).unwrap();
    let rms: f64 = run.metrics.get("rms_voltage_error").unwrap().parse().unwrap();
    outcome(
        (0.005..=0.1).contains(&rms),
        format!("RMS voltage error {rms:.5} V (reference 0.0234 V), band [0.005, 0.1]"),
    )
}

/// Three-state linear observer with injection gains, single sensor subset.
fn linear_case(h: f64) -> (Scenario, ObserverBank, DMatrix<f64>, DMatrix<f64>) {
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0, -0.5]));
    let b = DMatrix::identity(3, 3) * 0.5;
    let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.0, 1.0, 0.3, 0.1, 0.0, 1.0]);
    let slopes = [1.0, 0.4, 0.0];
    let phi = slopes.iter().map(|&slope| Nonlinearity::Affine { slope, offset: 0.3 }).collect();
    let sys = LureSystem::new(a.clone(), b.clone(), c.clone(), DVector::from_element(3, 1.0), phi).unwrap();
    let k = DMatrix::identity(3, 3) * 0.1;
    let l = -c.transpose() * 0.6;
    let e = DMatrix::from_diagonal(&DVector::from_row_slice(&slopes));
    let f = &a + &b * &e * &c;
    let g = (&b * &e * &k + &l) * &c;
    let input = (0..3)
        .map(|i| Signal::Sine { offset: 0.1 * i as f64, amplitude: 1.0, omega: 2.0 + i as f64, phase: 0.0 })
        .collect();
    let sc = Scenario {
        system: sys,
        input: InputModel::Signals(input),
        disturbance: Vec::new(),
        schedule: SamplingSchedule::uniform(0.5),
        attack: AttackScenario::none(0),
        noise_amplitude: 0.0,
        seed: 0,
        horizon: 5.0,
        step: h,
        x0: InitialState::Given(DVector::from_vec(vec![1.0, 0.6, 0.2])),
        x_hat0: InitialEstimate::Zero,
    };
    // with N_a = 0 the super- and sub-observer use the same full sensor set
    let gains = vec![ObserverGains { k: k.clone(), l: l.clone() }, ObserverGains { k, l }];
    let bank = ObserverBank::new(enumerate_subsets(3, 0).unwrap(), gains).unwrap();
    (sc, bank, f, g)
}

/// Max deviation of the simulated error from `exp([[F, G], [0, 0]]·s)` per segment.
fn oracle_deviation(h: f64) -> f64 {
    let (sc, bank, f, g) = linear_case(h);
    let traj = integrate(&sc, &bank).unwrap();
    let n = f.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&f);
    m.view_mut((0, n), (n, n)).copy_from(&g);
    let advance = |zk: &DVector<f64>, s: f64| {
        let mut v = DVector::zeros(2 * n);
        v.rows_mut(0, n).copy_from(zk);
        v.rows_mut(n, n).copy_from(zk);
        ((&m * s).exp() * v).rows(0, n).into_owned()
    };
    let times = sc.schedule.sample_times(sc.horizon).unwrap();
    let mut seg = 0;
    let mut zk = DVector::from_vec(vec![1.0, 0.6, 0.2]);
    let mut dev: f64 = 0.0;
    for i in 0..traj.len() {
        let t = traj.t[i];
        while seg + 1 < times.len() && times[seg + 1] <= t {
            zk = advance(&zk, times[seg + 1] - times[seg]);
            seg += 1;
        }
        let z = advance(&zk, t - times[seg]);
        for obs in &traj.x_hat[i] {
            dev = dev.max((&traj.x[i] - obs - &z).amax());
        }
    }
    dev
}

fn criterion_6() -> Outcome {
    let dev = oracle_deviation(1e-3);
    let ratio = oracle_deviation(0.05) / oracle_deviation(0.025);
    let pass = dev < 1e-7 && (8.0..32.0).contains(&ratio);
    outcome(
        pass,
        format!(
            "max deviation {dev:.3e} at h = 1e-3 (need < 1e-7); error ratio on halving h = {ratio:.2} (4th order: 16)"
        ),
    )
}

/// Exact initialization on the full bank keeps every observer error at zero.
fn criterion_7() -> Outcome {
    let cfg = config(FEEDER, &["attack.kind=none", "x_hat0_VAr=plant"]);
    let d = full_design();
    let sc = cfg.scenario().unwrap();
    let bank = d.file.gains().unwrap().bank(&cfg.family().unwrap()).unwrap();
    let traj = integrate(&sc, &bank).unwrap();
    let worst = (0..traj.len()).map(|i| traj.stacked_error(i).amax()).fold(0.0, f64::max);
    let pass = worst <= 1e-6 && traj.horizon() >= 20.0 - 1e-9;
    outcome(pass, format!("max |x~^S| = {worst:.3e} over {} observers and {:.0} s", traj.n_observers(), traj.horizon()))
}

/// Schedules over 10^4 samples stay in [T_lower, T_bar]; the case-study pattern gives the listed times.
fn criterion_8() -> Outcome {
    let mut worst_excess: f64 = 0.0;
    let mut count_min = usize::MAX;
    for s in [
        SamplingSchedule::case_study_pattern(1.0),
        SamplingSchedule::case_study_pattern(0.25),
        SamplingSchedule::case_study_pattern(2.0),
        SamplingSchedule::uniform(0.1),
    ] {
        let times = s.sample_times(1.3e4 * s.t_upper).unwrap();
        count_min = count_min.min(times.len() - 1);
        let pattern_ok = s.pattern.iter().all(|&g| g >= s.t_lower && g <= s.t_upper);
        if !pattern_ok {
            worst_excess = f64::INFINITY;
        }
        for w in times.windows(2) {
            let gap = w[1] - w[0];
            // differences of accumulated sums carry rounding at the scale of t
            let slack = 4.0 * f64::EPSILON * w[1];
            worst_excess = worst_excess.max(s.t_lower - slack - gap).max(gap - s.t_upper - slack);
        }
    }
    let first = SamplingSchedule::case_study_pattern(1.0).sample_times(5.3).unwrap();
    let expected = [1.0, 1.7, 1.9, 2.5, 2.9, 3.9, 4.8, 5.3];
    let exact = first.len() == 9 && first[1..] == expected;
    let pass = worst_excess <= 0.0 && count_min >= 10_000 && exact;
    outcome(
        pass,
        format!("{count_min}+ samples per schedule, bound excess {worst_excess:.1e}; t1..t8 = {:?}", &first[1..]),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 LMI feasibility, reduced bank", criterion_1),
        ("2 certificate implications", criterion_2),
        ("3 Lyapunov trajectory checks", criterion_3),
        ("4 attack independence", criterion_4),
        ("5 case-study RMS", criterion_5),
        ("6 integrator oracle", criterion_6),
        ("7 exact initialization", criterion_7),
        ("8 sampling contract", criterion_8),
    ];
    let results: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria.iter().map(|(_, f)| s.spawn(f)).collect();
        handles
            .into_iter()
            .map(|h| {
                h.join().unwrap_or_else(|e| {
                    let msg =
                        e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                    outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
                })
            })
            .collect()
    });
    let mut failed = 0;
    for ((name, _), r) in criteria.iter().zip(&results) {
        println!("{} criterion {name}: {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
