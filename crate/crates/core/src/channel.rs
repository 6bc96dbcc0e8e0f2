//! Sampling schedules, sensor attacks and measurement packets.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    /// The pattern of gaps is repeated until the horizon is covered.
    Repeat,
    /// The pattern is used once; it must reach the horizon on its own.
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSchedule {
    pub pattern: Vec<f64>,
    pub t_lower: f64,
    pub t_upper: f64,
    pub mode: ScheduleMode,
}

impl SamplingSchedule {
    pub fn uniform(period: f64) -> Self {
        Self { pattern: alloc::vec![period], t_lower: period, t_upper: period, mode: ScheduleMode::Repeat }
    }

    /// The eight-gap pattern of the grid case study, scaled by `t_bar`.
    pub fn case_study_pattern(t_bar: f64) -> Self {
        let pattern = [1.0, 0.7, 0.2, 0.6, 0.4, 1.0, 0.9, 0.5].iter().map(|f| f * t_bar).collect();
        Self { pattern, t_lower: 0.2 * t_bar, t_upper: t_bar, mode: ScheduleMode::Repeat }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_lower > 0.0) || !(self.t_lower <= self.t_upper) {
            return Err(Error::Schedule(format!(
                "bounds [{}, {}] are not an interval of positive times",
                self.t_lower, self.t_upper
            )));
        }
        if self.pattern.is_empty() {
            return Err(Error::Schedule("empty pattern".into()));
        }
        if let Some(g) = self.pattern.iter().find(|g| !(**g >= self.t_lower && **g <= self.t_upper)) {
            return Err(Error::Schedule(format!("gap {g} outside [{}, {}]", self.t_lower, self.t_upper)));
        }
        Ok(())
    }

    /// Sample times `t₀ = 0 < t₁ < …` up to the first time at or beyond `horizon`.
    pub fn sample_times(&self, horizon: f64) -> Result<Vec<f64>> {
        self.validate()?;
        if !(horizon > 0.0) {
            return Err(Error::Schedule(format!("horizon {horizon} must be positive")));
        }
        let mut times = alloc::vec![0.0];
        let mut t = 0.0;
        let mut k = 0;
        while t < horizon {
            if self.mode == ScheduleMode::Explicit && k == self.pattern.len() {
                return Err(Error::Schedule(format!("explicit list ends at t={t} before horizon {horizon}")));
            }
            t += self.pattern[k % self.pattern.len()];
            times.push(t);
            k += 1;
        }
        Ok(times)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackScenario {
    /// `(sensor index, signal)` pairs, 0-based.
    pub signals: Vec<(usize, Signal)>,
    pub n_a_declared: usize,
}

impl AttackScenario {
    pub fn none(n_a_declared: usize) -> Self {
        Self { signals: Vec::new(), n_a_declared }
    }

    /// The case-study attack on sensors 2 and 5, scaled by `c`.
    pub fn case_study(c: f64) -> Self {
        Self {
            signals: alloc::vec![
                (1, Signal::Square { amplitude: -5000.0 * c, omega: 1.0, phase: 0.0 }),
                (4, Signal::Cosine { offset: 0.0, amplitude: 7500.0 * c, omega: 5.0, phase: 0.0 }),
            ],
            n_a_declared: 2,
        }
    }

    pub fn attacked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = self.signals.iter().map(|(i, _)| *i).collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    }

    pub fn attack_value(&self, i: usize, t: f64) -> f64 {
        self.signals.iter().filter(|(j, _)| *j == i).map(|(_, s)| s.eval(t)).sum()
    }

    pub fn attack_vector(&self, n: usize, t: f64) -> DVector<f64> {
        DVector::from_fn(n, |i, _| self.attack_value(i, t))
    }

    /// Drops attacks on sensors `≥ n_c` and declares `n_a`; used for truncated grids.
    pub fn restricted(&self, n_c: usize, n_a: usize) -> Self {
        Self { signals: self.signals.iter().filter(|(i, _)| *i < n_c).cloned().collect(), n_a_declared: n_a }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { signals: self.signals.iter().map(|(i, s)| (*i, s.scaled(c))).collect(), n_a_declared: self.n_a_declared }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttackViolation {
    TooManyAttacked { attacked: usize, declared: usize },
    NoMajority { declared: usize, n_c: usize },
    SensorOutOfRange { index: usize, n_c: usize },
}

/// Checks `|attacked| ≤ N_a` and `2N_a < N_c`, listing every failed clause.
pub fn validate_attack(sc: &AttackScenario, n_c: usize) -> core::result::Result<(), Vec<AttackViolation>> {
    let mut out = Vec::new();
    let attacked = sc.attacked();
    if attacked.len() > sc.n_a_declared {
        out.push(AttackViolation::TooManyAttacked { attacked: attacked.len(), declared: sc.n_a_declared });
    }
    if 2 * sc.n_a_declared >= n_c {
        out.push(AttackViolation::NoMajority { declared: sc.n_a_declared, n_c });
    }
    for &index in attacked.iter().filter(|i| **i >= n_c) {
        out.push(AttackViolation::SensorOutOfRange { index, n_c });
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

pub(crate) fn describe_violations(v: &[AttackViolation]) -> String {
    let parts: Vec<String> = v
        .iter()
        .map(|v| match v {
            AttackViolation::TooManyAttacked { attacked, declared } => {
                format!("{attacked} sensors attacked but N_a = {declared}")
            }
            AttackViolation::NoMajority { declared, n_c } => format!("2·{declared} ≥ N_c = {n_c}"),
            AttackViolation::SensorOutOfRange { index, n_c } => {
                format!("attacked sensor {index} beyond {n_c} sensors")
            }
        })
        .collect();
    parts.join("; ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPacket {
    pub t_k: f64,
    pub k: usize,
    pub y: DVector<f64>,
}

pub fn emit_packet(
    m: &DVector<f64>,
    sc: &AttackScenario,
    noise: &DVector<f64>,
    t_k: f64,
    k: usize,
) -> Result<MeasurementPacket> {
    if m.len() != noise.len() {
        return Err(Error::Dimension(format!("m has {} entries, noise {}", m.len(), noise.len())));
    }
    let y = m + sc.attack_vector(m.len(), t_k) + noise;
    Ok(MeasurementPacket { t_k, k, y })
}

/// Seeded measurement noise, uniform on `[−amplitude, amplitude]`.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    amplitude: f64,
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(amplitude: f64, seed: u64) -> Self {
        Self { amplitude, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn sample(&mut self, n: usize) -> DVector<f64> {
        if self.amplitude == 0.0 {
            return DVector::zeros(n);
        }
        let a = self.amplitude;
        DVector::from_fn(n, |_, _| self.rng.random_range(-a..=a))
    }
}
