//! Coupled plant and observer-bank integration over a sampled scenario.
//!
//! Between samples the plant and every observer flow with the innovation
//! held at its last sampled value; at each sample time a packet is emitted
//! and the held innovations are refreshed. Steps are subdivided so that no
//! step straddles a sample.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::channel::{
    describe_violations, emit_packet, validate_attack, AttackScenario, NoiseSource, SamplingSchedule,
};
use crate::error::{Error, Result};
use crate::linalg::expm;
use crate::lure::{voltage_from_state, GridTopology, LureSystem, Nonlinearity};
use crate::lyapunov::ErrorPoint;
use crate::observer::{consistency_measures, derivative_with_innovation, select_index, ObserverBank, ObserverRuntime};
use crate::signal::Signal;

/// Measured input `u(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InputModel {
    /// `u_i = v̄² − v₀(t)² + o_i`; also enables voltage reconstruction.
    Grid { v_bar: f64, v0: Signal, offsets: DVector<f64> },
    /// One signal per channel.
    Signals(Vec<Signal>),
}

impl InputModel {
    pub fn from_grid(g: &GridTopology) -> Result<Self> {
        Ok(InputModel::Grid { v_bar: g.v_bar, v0: g.v0.clone(), offsets: g.offsets()? })
    }

    pub fn dim(&self) -> usize {
        match self {
            InputModel::Grid { offsets, .. } => offsets.len(),
            InputModel::Signals(s) => s.len(),
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            InputModel::Grid { v_bar, v0, offsets } => {
                let v0 = v0.eval(t);
                offsets.map(|o| v_bar * v_bar - v0 * v0 + o)
            }
            InputModel::Signals(s) => DVector::from_iterator(s.len(), s.iter().map(|s| s.eval(t))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Zero,
    /// Equilibrium of the plant for the input frozen at `t = 0`.
    Equilibrium,
    Given(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialEstimate {
    Zero,
    /// Every observer starts at the plant's initial state.
    Plant,
    Common(DVector<f64>),
    PerObserver(Vec<DVector<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub system: LureSystem,
    pub input: InputModel,
    /// Process disturbance per channel; empty means zero.
    pub disturbance: Vec<Signal>,
    pub schedule: SamplingSchedule,
    pub attack: AttackScenario,
    /// Measurement noise is uniform on `[−a, a]`.
    pub noise_amplitude: f64,
    pub seed: u64,
    pub horizon: f64,
    pub step: f64,
    pub x0: InitialState,
    pub x_hat0: InitialEstimate,
}

impl Scenario {
    /// Grid scenario with the case-study sampling pattern (`T̄ = 1`), no attack,
    /// no noise, 20 s horizon and `h = 1e−3`.
    pub fn grid(g: &GridTopology) -> Result<Self> {
        Ok(Self {
            system: g.build_lure()?,
            input: InputModel::from_grid(g)?,
            disturbance: Vec::new(),
            schedule: SamplingSchedule::case_study_pattern(1.0),
            attack: AttackScenario::none(0),
            noise_amplitude: 0.0,
            seed: 0,
            horizon: 20.0,
            step: 1e-3,
            x0: InitialState::Zero,
            x_hat0: InitialEstimate::Zero,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.system.n_states();
        self.schedule.validate()?;
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Parameter(format!("horizon {} must be positive", self.horizon)));
        }
        if !(self.step > 0.0) || self.step > self.schedule.t_lower / 10.0 * (1.0 + 1e-12) {
            return Err(Error::Parameter(format!(
                "step {} must lie in (0, T̲/10 = {}]",
                self.step,
                self.schedule.t_lower / 10.0
            )));
        }
        if self.input.dim() != n {
            return Err(Error::Dimension(format!("input has {} channels for {n} states", self.input.dim())));
        }
        if !self.disturbance.is_empty() && self.disturbance.len() != n {
            return Err(Error::Dimension(format!(
                "disturbance has {} channels for {n} states",
                self.disturbance.len()
            )));
        }
        if !(self.noise_amplitude >= 0.0) {
            return Err(Error::Parameter("noise amplitude must be non-negative".into()));
        }
        validate_attack(&self.attack, n).map_err(|v| Error::AttackAssumption(describe_violations(&v)))
    }

    pub fn disturbance_at(&self, t: f64) -> DVector<f64> {
        let n = self.system.n_states();
        if self.disturbance.is_empty() {
            return DVector::zeros(n);
        }
        DVector::from_iterator(n, self.disturbance.iter().map(|s| s.eval(t)))
    }

    pub fn initial_state(&self) -> Result<DVector<f64>> {
        let n = self.system.n_states();
        match &self.x0 {
            InitialState::Zero => Ok(DVector::zeros(n)),
            InitialState::Equilibrium => {
                let u = self.input.eval(0.0) + self.disturbance_at(0.0);
                self.system.equilibrium(&u, &DVector::zeros(n))
            }
            InitialState::Given(x) if x.len() == n => Ok(x.clone()),
            InitialState::Given(x) => Err(Error::Dimension(format!("x(0) has {} entries for {n} states", x.len()))),
        }
    }

    fn initial_estimates(&self, x0: &DVector<f64>, n_obs: usize) -> Result<Vec<DVector<f64>>> {
        let n = x0.len();
        let check = |v: &DVector<f64>| {
            if v.len() == n {
                Ok(v.clone())
            } else {
                Err(Error::Dimension(format!("x̂(0) has {} entries for {n} states", v.len())))
            }
        };
        match &self.x_hat0 {
            InitialEstimate::Zero => Ok(alloc::vec![DVector::zeros(n); n_obs]),
            InitialEstimate::Plant => Ok(alloc::vec![x0.clone(); n_obs]),
            InitialEstimate::Common(v) => Ok(alloc::vec![check(v)?; n_obs]),
            InitialEstimate::PerObserver(v) if v.len() == n_obs => v.iter().map(check).collect(),
            InitialEstimate::PerObserver(v) => {
                Err(Error::Dimension(format!("{} initial estimates for {n_obs} observers", v.len())))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleEvent {
    pub k: usize,
    pub t: f64,
    /// Index into the trajectory's time grid.
    pub index: usize,
    pub attack: DVector<f64>,
    pub y: DVector<f64>,
    /// Stacked `ż̃` just before the packet; the right limit is stored on the grid.
    pub left_error_rate: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoltageTrace {
    pub v: Vec<DVector<f64>>,
    pub v_hat: Vec<DVector<f64>>,
    /// Number of grid points where a squared voltage came out negative (clamped to 0).
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    /// `x_hat[step][observer]` in bank order.
    pub x_hat: Vec<Vec<DVector<f64>>>,
    pub pi: Vec<Vec<f64>>,
    pub sigma: Vec<usize>,
    pub selected: Vec<DVector<f64>>,
    /// Stacked `ż̃ = (ẋ − ẋ̂^S)_S`, right limit at sample times.
    pub error_rate: Vec<DVector<f64>>,
    pub sample_flag: Vec<bool>,
    pub samples: Vec<SampleEvent>,
    pub voltage: Option<VoltageTrace>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    pub fn n_observers(&self) -> usize {
        self.x_hat.first().map_or(0, |v| v.len())
    }

    /// `x − x̂` for the selected estimate.
    pub fn selected_error(&self, i: usize) -> DVector<f64> {
        &self.x[i] - &self.selected[i]
    }

    /// Stacked `z̃ = (x − x̂^S)_S` in bank order.
    pub fn stacked_error(&self, i: usize) -> DVector<f64> {
        let n = self.x[i].len();
        let obs = &self.x_hat[i];
        DVector::from_fn(n * obs.len(), |r, _| self.x[i][r % n] - obs[r / n][r % n])
    }

    /// Error samples for the Lyapunov checks: each sample time after the first
    /// appears twice, as the left limit closing one segment and the right
    /// limit opening the next.
    pub fn error_points(&self) -> Vec<ErrorPoint> {
        let mut out = Vec::with_capacity(self.len() + self.samples.len());
        let mut events = self.samples.iter().peekable();
        let mut segment = 0usize;
        for i in 0..self.len() {
            let z = self.stacked_error(i);
            if let Some(ev) = events.peek() {
                if ev.index == i {
                    if ev.k > 0 {
                        out.push(ErrorPoint { t: self.t[i], segment, z: z.clone(), z_dot: ev.left_error_rate.clone() });
                        segment += 1;
                    }
                    events.next();
                }
            }
            out.push(ErrorPoint { t: self.t[i], segment, z, z_dot: self.error_rate[i].clone() });
        }
        out
    }

    pub fn sigma_switches(&self) -> usize {
        self.sigma.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

struct Flow<'a> {
    sys: &'a LureSystem,
    bank: &'a ObserverBank,
    scenario: &'a Scenario,
}

impl Flow<'_> {
    fn n(&self) -> usize {
        self.sys.n_states()
    }

    /// Derivative of the stacked state `(x, x̂^1, …, x̂^{N_O})`.
    fn rhs(&self, t: f64, s: &DVector<f64>, inn: &[DVector<f64>]) -> DVector<f64> {
        let n = self.n();
        let u = self.scenario.input.eval(t);
        let d = self.scenario.disturbance_at(t);
        let mut out = DVector::zeros(s.len());
        let x = s.rows(0, n).into_owned();
        out.rows_mut(0, n).copy_from(&self.sys.derivative_unchecked(&x, &u, &d));
        for (o, (g, inn)) in self.bank.gains.iter().zip(inn).enumerate() {
            let xh = s.rows((o + 1) * n, n).into_owned();
            let dx = derivative_with_innovation(self.sys, g, &xh, inn, &u);
            out.rows_mut((o + 1) * n, n).copy_from(&dx);
        }
        out
    }

    fn rk4(&self, t: f64, dt: f64, s: &DVector<f64>, inn: &[DVector<f64>]) -> DVector<f64> {
        let k1 = self.rhs(t, s, inn);
        let k2 = self.rhs(t + 0.5 * dt, &(s + &k1 * (0.5 * dt)), inn);
        let k3 = self.rhs(t + 0.5 * dt, &(s + &k2 * (0.5 * dt)), inn);
        let k4 = self.rhs(t + dt, &(s + &k3 * dt), inn);
        s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
    }

    fn error_rate(&self, ds: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let n_obs = self.bank.n_observers();
        DVector::from_fn(n * n_obs, |r, _| ds[r % n] - ds[n + r])
    }
}

struct Recorder<'a> {
    traj: Trajectory,
    family: &'a crate::observer::SubsetFamily,
    c: DMatrix<f64>,
    grid: Option<(f64, Signal, DVector<f64>)>,
}

impl Recorder<'_> {
    fn push(&mut self, t: f64, s: &DVector<f64>, rate: DVector<f64>, n: usize, n_obs: usize) -> Result<()> {
        let x = s.rows(0, n).into_owned();
        let est: Vec<DVector<f64>> = (0..n_obs).map(|o| s.rows((o + 1) * n, n).into_owned()).collect();
        let pi = consistency_measures(&est, self.family);
        let sigma = select_index(&pi);
        let selected = est[sigma].clone();
        if let Some((_, v0, offsets)) = &self.grid {
            let v0 = v0.eval(t);
            let (v2, neg) = voltage_from_state(&self.c, &x, offsets, v0)?;
            let (v2h, neg_h) = voltage_from_state(&self.c, &selected, offsets, v0)?;
            let tr =
                self.traj.voltage.get_or_insert_with(|| VoltageTrace { v: Vec::new(), v_hat: Vec::new(), negative: 0 });
            tr.negative += usize::from(!neg.is_empty() || !neg_h.is_empty());
            tr.v.push(v2.map(|v| libm::sqrt(v.max(0.0))));
            tr.v_hat.push(v2h.map(|v| libm::sqrt(v.max(0.0))));
        }
        self.traj.t.push(t);
        self.traj.x.push(x);
        self.traj.x_hat.push(est);
        self.traj.pi.push(pi);
        self.traj.sigma.push(sigma);
        self.traj.selected.push(selected);
        self.traj.error_rate.push(rate);
        self.traj.sample_flag.push(false);
        Ok(())
    }
}

/// Fixed-step RK4 integration of plant and observer bank over the scenario.
pub fn integrate(scenario: &Scenario, bank: &ObserverBank) -> Result<Trajectory> {
    scenario.validate()?;
    let sys = &scenario.system;
    let n = sys.n_states();
    if bank.family.n_c != n {
        return Err(Error::Dimension(format!("bank built for {} sensors, system has {n} states", bank.family.n_c)));
    }
    let attacked = scenario.attack.attacked().len();
    if attacked > bank.family.n_a {
        return Err(Error::AttackAssumption(format!(
            "{attacked} sensors attacked but the bank tolerates N_a = {}",
            bank.family.n_a
        )));
    }
    let n_obs = bank.n_observers();
    let x0 = scenario.initial_state()?;
    let est0 = scenario.initial_estimates(&x0, n_obs)?;
    let mut s = DVector::zeros(n * (n_obs + 1));
    s.rows_mut(0, n).copy_from(&x0);
    for (o, e) in est0.iter().enumerate() {
        s.rows_mut((o + 1) * n, n).copy_from(e);
    }

    let times: Vec<f64> =
        scenario.schedule.sample_times(scenario.horizon)?.into_iter().filter(|t| *t <= scenario.horizon).collect();
    let flow = Flow { sys, bank, scenario };
    let grid = match &scenario.input {
        InputModel::Grid { v_bar, v0, offsets } => Some((*v_bar, v0.clone(), offsets.clone())),
        InputModel::Signals(_) => None,
    };
    let steps_hint = (scenario.horizon / scenario.step) as usize + times.len() + 1;
    let mut rec = Recorder {
        traj: Trajectory {
            t: Vec::with_capacity(steps_hint),
            x: Vec::with_capacity(steps_hint),
            x_hat: Vec::with_capacity(steps_hint),
            pi: Vec::with_capacity(steps_hint),
            sigma: Vec::with_capacity(steps_hint),
            selected: Vec::with_capacity(steps_hint),
            error_rate: Vec::with_capacity(steps_hint),
            sample_flag: Vec::with_capacity(steps_hint),
            samples: Vec::with_capacity(times.len()),
            voltage: None,
        },
        family: &bank.family,
        c: sys.c.clone(),
        grid,
    };

    let mut noise = NoiseSource::new(scenario.noise_amplitude, scenario.seed);
    let mut runtime = ObserverRuntime::new(est0);
    let mut inn: Vec<DVector<f64>> = bank.family.all().map(|sub| DVector::zeros(sub.len())).collect();
    rec.push(0.0, &s, flow.error_rate(&flow.rhs(0.0, &s, &inn)), n, n_obs)?;

    for (k, &t_k) in times.iter().enumerate() {
        // packet at t_k
        let x = s.rows(0, n).into_owned();
        let u = scenario.input.eval(t_k);
        let m = &sys.c * &x + &u + scenario.disturbance_at(t_k);
        let w = noise.sample(n);
        let packet = emit_packet(&m, &scenario.attack, &w, t_k, k)?;
        for o in 0..n_obs {
            runtime.x_hat[o] = s.rows((o + 1) * n, n).into_owned();
        }
        runtime.on_packet(bank, sys, t_k, &packet.y, &u)?;
        for (slot, h) in inn.iter_mut().zip(&runtime.held) {
            if let Some(h) = h {
                *slot = h.innovation.clone();
            }
        }
        let index = rec.traj.len() - 1;
        let left = core::mem::replace(&mut rec.traj.error_rate[index], flow.error_rate(&flow.rhs(t_k, &s, &inn)));
        rec.traj.sample_flag[index] = true;
        rec.traj.samples.push(SampleEvent {
            k,
            t: t_k,
            index,
            attack: scenario.attack.attack_vector(n, t_k),
            y: packet.y,
            left_error_rate: left,
        });

        let end = times.get(k + 1).copied().unwrap_or(scenario.horizon).min(scenario.horizon);
        let span = end - t_k;
        if span <= 0.0 {
            continue;
        }
        let steps = libm::ceil(span / scenario.step - 1e-9).max(1.0) as usize;
        let dt = span / steps as f64;
        for j in 0..steps {
            let t = t_k + j as f64 * dt;
            let t_next = if j + 1 == steps { end } else { t_k + (j + 1) as f64 * dt };
            s = flow.rk4(t, t_next - t, &s, &inn);
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integration { t: t_next });
            }
            let rate = flow.error_rate(&flow.rhs(t_next, &s, &inn));
            rec.push(t_next, &s, rate, n, n_obs)?;
        }
    }
    Ok(rec.traj)
}

fn require_voltage(traj: &Trajectory) -> Result<&VoltageTrace> {
    traj.voltage.as_ref().ok_or_else(|| Error::Parameter("trajectory carries no voltages (not a grid scenario)".into()))
}

fn indices_after(traj: &Trajectory, t0: f64) -> Result<core::ops::Range<usize>> {
    if !(t0 < traj.horizon()) {
        return Err(Error::Parameter(format!("t0 = {t0} is not before the horizon {}", traj.horizon())));
    }
    let start = traj.t.partition_point(|t| *t < t0);
    Ok(start..traj.len())
}

/// RMS of `v_i − v̂_i` over customers and grid points with `t ≥ t_start`.
pub fn rms_voltage_error(traj: &Trajectory, t_start: f64) -> Result<f64> {
    let vt = require_voltage(traj)?;
    let range = indices_after(traj, t_start)?;
    let (mut acc, mut count) = (0.0, 0usize);
    for i in range {
        acc += (&vt.v[i] - &vt.v_hat[i]).norm_squared();
        count += vt.v[i].len();
    }
    Ok(libm::sqrt(acc / count as f64))
}

/// `sup_{t ≥ t0} |x(t) − x̂(t)|` for the selected estimate.
pub fn sup_error_after(traj: &Trajectory, t0: f64) -> Result<f64> {
    Ok(indices_after(traj, t0)?.map(|i| traj.selected_error(i).norm()).fold(0.0, f64::max))
}

/// Grid-point average of `|x(t) − x̂(t)|` for `t ≥ t0`.
pub fn mean_error_after(traj: &Trajectory, t0: f64) -> Result<f64> {
    let range = indices_after(traj, t0)?;
    let len = range.len() as f64;
    Ok(range.map(|i| traj.selected_error(i).norm()).sum::<f64>() / len)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub max_deviation: f64,
    pub points: usize,
    pub step: f64,
}

/// Compares the simulated error `x − x̂` of an affine-regime bank with `N_a = 0`
/// (every observer sees all sensors) with the exact piecewise-exponential
/// solution, observer by observer.
///
/// With `φ(w) = Ew + o` and no attack, noise or disturbance the error obeys
/// `ż̃ = (A + BEC) z̃ + (BEK + L) C z̃(t_k)` between samples, which is solved on
/// each interval by the exponential of `[[F, G], [0, 0]]`.
pub fn linear_oracle_compare(scenario: &Scenario, bank: &ObserverBank) -> Result<OracleComparison> {
    if bank.family.n_a != 0 {
        return Err(Error::Parameter(format!("oracle needs N_a = 0, bank has N_a = {}", bank.family.n_a)));
    }
    if !scenario.attack.attacked().is_empty() || scenario.noise_amplitude != 0.0 {
        return Err(Error::Parameter("oracle needs a run without attack and noise".into()));
    }
    if scenario.disturbance.iter().any(|d| !d.is_zero()) {
        return Err(Error::Parameter("oracle needs zero process disturbance".into()));
    }
    let sys = &scenario.system;
    let n = sys.n_states();
    let slopes = sys
        .phi
        .iter()
        .map(|p| match p {
            Nonlinearity::Affine { slope, .. } => Ok(*slope),
            _ => Err(Error::Parameter("oracle needs affine nonlinearities".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    let e = DMatrix::from_diagonal(&DVector::from_vec(slopes));
    let f = &sys.a + &sys.b * &e * &sys.c;
    let traj = integrate(scenario, bank)?;
    let mut worst: f64 = 0.0;
    for (o, g) in bank.gains.iter().enumerate() {
        let gmat = (&sys.b * &e * &g.k + &g.l) * &sys.c;
        let mut aug = DMatrix::zeros(2 * n, 2 * n);
        aug.view_mut((0, 0), (n, n)).copy_from(&f);
        aug.view_mut((0, n), (n, n)).copy_from(&gmat);
        let mut z_k = &traj.x[0] - &traj.x_hat[0][o];
        let mut t_k = 0.0;
        let mut events = traj.samples.iter().peekable();
        for i in 0..traj.len() {
            let t = traj.t[i];
            let phi = expm(&(&aug * (t - t_k)));
            let z = phi.view((0, 0), (n, n)) * &z_k + phi.view((0, n), (n, n)) * &z_k;
            let sim = &traj.x[i] - &traj.x_hat[i][o];
            worst = worst.max((&sim - &z).norm());
            if events.peek().is_some_and(|ev| ev.index == i) {
                events.next();
                z_k = z;
                t_k = t;
            }
        }
    }
    Ok(OracleComparison { max_deviation: worst, points: traj.len(), step: scenario.step })
}
