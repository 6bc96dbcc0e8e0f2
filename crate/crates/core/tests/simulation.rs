use nalgebra::{DMatrix, DVector};
use sse_core::channel::{AttackScenario, SamplingSchedule};
use sse_core::lure::{GridTopology, LureSystem, Nonlinearity};
use sse_core::observer::{enumerate_subsets, ObserverBank, ObserverGains};
use sse_core::signal::Signal;
use sse_core::sim::{
    integrate, linear_oracle_compare, mean_error_after, rms_voltage_error, sup_error_after, InitialEstimate,
    InitialState, InputModel, Scenario,
};
use sse_core::Error;

fn reduced_grid() -> GridTopology {
    GridTopology::benchmark_feeder().truncated(3).unwrap()
}

fn reduced_scenario() -> (Scenario, ObserverBank) {
    let g = reduced_grid();
    let mut sc = Scenario::grid(&g).unwrap();
    sc.x0 = InitialState::Equilibrium;
    sc.attack = AttackScenario::case_study(1.0).restricted(3, 1);
    (sc, ObserverBank::with_zero_gains(enumerate_subsets(3, 1).unwrap()))
}

fn injection_bank(sc: &Scenario, n_a: usize, ell: f64) -> ObserverBank {
    let n = sc.system.n_states();
    ObserverBank::with_injection(enumerate_subsets(n, n_a).unwrap(), &sc.system.c, ell).unwrap()
}

fn affine(slope: f64) -> Nonlinearity {
    Nonlinearity::Affine { slope, offset: 0.3 }
}

fn single_observer(sys: LureSystem, k: DMatrix<f64>, l: DMatrix<f64>, period: f64, h: f64) -> (Scenario, ObserverBank) {
    let n = sys.n_states();
    let input = (0..n)
        .map(|i| Signal::Sine { offset: 0.1 * i as f64, amplitude: 1.0, omega: 2.0 + i as f64, phase: 0.0 })
        .collect();
    let sc = Scenario {
        system: sys,
        input: InputModel::Signals(input),
        disturbance: Vec::new(),
        schedule: SamplingSchedule::uniform(period),
        attack: AttackScenario::none(0),
        noise_amplitude: 0.0,
        seed: 0,
        horizon: 5.0,
        step: h,
        x0: InitialState::Given(DVector::from_fn(n, |i, _| 1.0 - 0.4 * i as f64)),
        x_hat0: InitialEstimate::Zero,
    };
    let bank = ObserverBank::new(
        enumerate_subsets(n, 0).unwrap(),
        vec![ObserverGains { k: k.clone(), l: l.clone() }, ObserverGains { k, l }],
    )
    .unwrap();
    (sc, bank)
}

fn scalar_case(h: f64) -> (Scenario, ObserverBank) {
    let sys = LureSystem::new(
        DMatrix::from_element(1, 1, -1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, 1.0),
        vec![affine(0.5)],
    )
    .unwrap();
    single_observer(sys, DMatrix::from_element(1, 1, 0.3), DMatrix::from_element(1, 1, -0.8), 0.5, h)
}

fn diagonal_case(h: f64) -> (Scenario, ObserverBank) {
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0, -0.5]));
    let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.0, 1.0, 0.3, 0.1, 0.0, 1.0]);
    let sys = LureSystem::new(
        a,
        DMatrix::identity(3, 3) * 0.5,
        c.clone(),
        DVector::from_element(3, 1.0),
        vec![affine(1.0), affine(0.4), affine(0.0)],
    )
    .unwrap();
    let k = DMatrix::identity(3, 3) * 0.1;
    let l = -c.transpose() * 0.6;
    single_observer(sys, k, l, 0.5, h)
}

#[test]
fn scalar_matches_exponential_oracle() {
    let (sc, bank) = scalar_case(1e-3);
    let r = linear_oracle_compare(&sc, &bank).unwrap();
    assert!(r.max_deviation < 1e-8, "deviation {}", r.max_deviation);
    assert!(r.points > 5000);
}

#[test]
fn diagonal_three_state_matches_oracle() {
    let (sc, bank) = diagonal_case(1e-3);
    let r = linear_oracle_compare(&sc, &bank).unwrap();
    assert!(r.max_deviation < 1e-7, "deviation {}", r.max_deviation);
}

#[test]
fn oracle_error_is_fourth_order() {
    for case in [scalar_case as fn(f64) -> (Scenario, ObserverBank), diagonal_case] {
        let dev = |h: f64| {
            let (sc, bank) = case(h);
            linear_oracle_compare(&sc, &bank).unwrap().max_deviation
        };
        let ratio = dev(0.05) / dev(0.025);
        assert!((8.0..32.0).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn oracle_rejects_non_affine_or_attacked_runs() {
    let (sc, bank) = reduced_scenario();
    assert!(linear_oracle_compare(&sc, &bank).is_err());
    let (mut sc, bank) = scalar_case(1e-2);
    sc.noise_amplitude = 0.1;
    assert!(linear_oracle_compare(&sc, &bank).is_err());
}

#[test]
fn exact_initialization_keeps_zero_error() {
    let g = GridTopology::benchmark_feeder();
    let mut sc = Scenario::grid(&g).unwrap();
    sc.x0 = InitialState::Equilibrium;
    sc.x_hat0 = InitialEstimate::Plant;
    for bank in [ObserverBank::with_zero_gains(enumerate_subsets(5, 2).unwrap()), injection_bank(&sc, 2, 0.5)] {
        let traj = integrate(&sc, &bank).unwrap();
        assert!((traj.horizon() - 20.0).abs() < 1e-12);
        let worst = (0..traj.len()).map(|i| traj.stacked_error(i).amax()).fold(0.0, f64::max);
        assert!(worst <= 1e-6, "worst {worst}");
        assert!(rms_voltage_error(&traj, 0.0).unwrap() < 1e-9);
        assert!(sup_error_after(&traj, 0.0).unwrap() <= 1e-6);
    }
}

#[test]
fn samples_are_hit_exactly_once() {
    let (sc, bank) = reduced_scenario();
    let traj = integrate(&sc, &bank).unwrap();
    let expected: Vec<f64> = sc.schedule.sample_times(sc.horizon).unwrap().into_iter().filter(|t| *t <= 20.0).collect();
    let got: Vec<f64> = traj.samples.iter().map(|e| e.t).collect();
    assert_eq!(got, expected);
    assert_eq!(traj.sample_flag.iter().filter(|f| **f).count(), expected.len());
    for e in &traj.samples {
        assert_eq!(traj.t[e.index], e.t);
        assert!(traj.sample_flag[e.index]);
    }
    assert!(traj.t.windows(2).all(|w| w[1] > w[0]));
    for w in traj.t.windows(2) {
        assert!(!expected.iter().any(|t| *t > w[0] && *t < w[1]), "step straddles a sample in {w:?}");
        assert!(w[1] - w[0] <= sc.step * (1.0 + 1e-9));
    }
}

#[test]
fn identical_seeds_give_identical_runs() {
    let (mut sc, _) = reduced_scenario();
    sc.noise_amplitude = 100.0;
    sc.seed = 7;
    let bank = injection_bank(&sc, 1, 0.5);
    let a = integrate(&sc, &bank).unwrap();
    let b = integrate(&sc, &bank).unwrap();
    assert_eq!(a, b);
    sc.seed = 8;
    let c = integrate(&sc, &bank).unwrap();
    assert_ne!(a.x_hat, c.x_hat);
}

#[test]
fn halving_the_step_barely_moves_the_error() {
    let (mut sc, bank) = reduced_scenario();
    sc.step = 2e-3;
    let coarse = sup_error_after(&integrate(&sc, &bank).unwrap(), 0.0).unwrap();
    sc.step = 1e-3;
    let fine = sup_error_after(&integrate(&sc, &bank).unwrap(), 0.0).unwrap();
    assert!(fine > 0.0);
    assert!((coarse - fine).abs() / fine < 0.01);
}

#[test]
fn droop_states_stay_within_saturation() {
    let g = GridTopology::benchmark_feeder();
    let mut sc = Scenario::grid(&g).unwrap();
    sc.x0 = InitialState::Given(DVector::from_vec(vec![3000.0, -100.0, 0.0, 500.0, 2500.0]));
    sc.attack = AttackScenario::case_study(1.0);
    let traj = integrate(&sc, &ObserverBank::with_zero_gains(enumerate_subsets(5, 2).unwrap())).unwrap();
    let q_bar = g.q_bar().unwrap();
    for x in &traj.x {
        for i in 0..5 {
            let cap = traj.x[0][i].abs().max(q_bar[i]);
            assert!(x[i].abs() <= cap * (1.0 + 1e-9), "customer {i}: {} > {cap}", x[i]);
        }
    }
}

#[test]
fn attack_scale_does_not_change_error_band() {
    let (sc, bank) = reduced_scenario();
    let run = |c: f64| {
        let mut s = sc.clone();
        s.attack = AttackScenario::case_study(c).restricted(3, 1);
        integrate(&s, &bank).unwrap()
    };
    let trajs: Vec<_> = [0.0, 1.0, 10.0].iter().map(|c| run(*c)).collect();
    let sups: Vec<f64> = trajs.iter().map(|t| sup_error_after(t, 5.0).unwrap()).collect();
    let hi = sups.iter().cloned().fold(0.0, f64::max);
    let lo = sups.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(hi <= 2.0 * lo, "{sups:?}");
    let means: Vec<f64> = trajs[1..].iter().map(|t| mean_error_after(t, 5.0).unwrap()).collect();
    assert!(means[0].max(means[1]) < 2.0 * means[0].min(means[1]));
    let doubled = {
        let mut s = sc.clone();
        s.attack = AttackScenario::case_study(2.0).restricted(3, 1);
        rms_voltage_error(&integrate(&s, &bank).unwrap(), 0.0).unwrap()
    };
    let base = rms_voltage_error(&trajs[1], 0.0).unwrap();
    assert!((doubled - base).abs() < 0.25 * base);
}

#[test]
fn more_noise_means_larger_error() {
    let (mut sc, _) = reduced_scenario();
    sc.attack = AttackScenario::none(1);
    sc.x_hat0 = InitialEstimate::Plant;
    sc.seed = 3;
    let bank = injection_bank(&sc, 1, 0.5);
    let sup = |a: f64| {
        let mut s = sc.clone();
        s.noise_amplitude = a;
        sup_error_after(&integrate(&s, &bank).unwrap(), 0.0).unwrap()
    };
    let levels = [sup(10.0), sup(100.0), sup(1000.0)];
    assert!(levels[0] < levels[1] && levels[1] < levels[2], "{levels:?}");
}

#[test]
fn error_points_pair_up_at_samples() {
    let (sc, bank) = reduced_scenario();
    let traj = integrate(&sc, &bank).unwrap();
    let pts = traj.error_points();
    assert_eq!(pts.len(), traj.len() + traj.samples.len() - 1);
    let pairs = pts.windows(2).filter(|w| w[0].t == w[1].t).count();
    assert_eq!(pairs, traj.samples.len() - 1);
    assert_eq!(pts.last().unwrap().segment, traj.samples.len() - 1);
    assert_eq!(pts[0].z.len(), 6 * 3);
}

#[test]
fn voltages_sit_near_nominal() {
    let (sc, bank) = reduced_scenario();
    let traj = integrate(&sc, &bank).unwrap();
    let vt = traj.voltage.as_ref().unwrap();
    assert_eq!(vt.negative, 0);
    assert!(vt.v.iter().all(|v| v.iter().all(|v| (200.0..260.0).contains(v))));
    let rms = rms_voltage_error(&traj, 0.0).unwrap();
    assert!(rms > 0.0 && rms < 1.0, "rms {rms}");
}

#[test]
fn invalid_scenarios_are_rejected() {
    let (mut sc, bank) = reduced_scenario();
    sc.step = 0.05;
    assert!(matches!(integrate(&sc, &bank), Err(Error::Parameter(_))));
    let (mut sc, _) = reduced_scenario();
    let wrong = ObserverBank::with_zero_gains(enumerate_subsets(5, 2).unwrap());
    assert!(matches!(integrate(&sc, &wrong), Err(Error::Dimension(_))));
    sc.attack = AttackScenario::case_study(1.0).restricted(3, 2);
    assert!(matches!(
        integrate(&sc, &ObserverBank::with_zero_gains(enumerate_subsets(3, 1).unwrap())),
        Err(Error::AttackAssumption(_))
    ));
    let (mut sc, bank) = reduced_scenario();
    sc.x_hat0 = InitialEstimate::Common(DVector::zeros(2));
    assert!(matches!(integrate(&sc, &bank), Err(Error::Dimension(_))));
    assert!(rms_voltage_error(&integrate(&reduced_scenario().0, &bank).unwrap(), 25.0).is_err());
}

#[test]
fn divergence_is_reported_with_time() {
    let sys = LureSystem::new(
        DMatrix::from_element(1, 1, 60.0),
        DMatrix::from_element(1, 1, 0.0),
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, 1.0),
        vec![affine(0.0)],
    )
    .unwrap();
    let (mut sc, bank) = single_observer(sys, DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), 0.5, 1e-2);
    sc.horizon = 20.0;
    match integrate(&sc, &bank) {
        Err(Error::Integration { t }) => assert!(t > 5.0 && t < 20.0, "t = {t}"),
        other => panic!("expected divergence, got {:?}", other.map(|t| t.len())),
    }
}
