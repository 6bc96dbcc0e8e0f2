//! Scalar time signals used for attacks, substation voltage and disturbances.

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Zero,
    Constant(f64),
    /// `offset + amplitude·sin(ω t + phase)`
    Sine {
        offset: f64,
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// `offset + amplitude·cos(ω t + phase)`
    Cosine {
        offset: f64,
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// `amplitude·sign(sin(ω t + phase))` with `sign(0) = 0`.
    Square {
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// Piecewise-linear interpolation, held constant outside the table.
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Signal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Constant(c) => *c,
            Signal::Sine { offset, amplitude, omega, phase } => offset + amplitude * libm::sin(omega * t + phase),
            Signal::Cosine { offset, amplitude, omega, phase } => offset + amplitude * libm::cos(omega * t + phase),
            Signal::Square { amplitude, omega, phase } => amplitude * sign(libm::sin(omega * t + phase)),
            Signal::Table { times, values } => table_lookup(times, values, t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Signal::Zero)
    }

    /// Same signal with its output multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Signal {
        match self {
            Signal::Zero => Signal::Zero,
            Signal::Constant(v) => Signal::Constant(c * v),
            Signal::Sine { offset, amplitude, omega, phase } => {
                Signal::Sine { offset: c * offset, amplitude: c * amplitude, omega: *omega, phase: *phase }
            }
            Signal::Cosine { offset, amplitude, omega, phase } => {
                Signal::Cosine { offset: c * offset, amplitude: c * amplitude, omega: *omega, phase: *phase }
            }
            Signal::Square { amplitude, omega, phase } => {
                Signal::Square { amplitude: c * amplitude, omega: *omega, phase: *phase }
            }
            Signal::Table { times, values } => {
                Signal::Table { times: times.clone(), values: values.iter().map(|v| c * v).collect() }
            }
        }
    }
}

pub(crate) fn table_lookup(times: &[f64], values: &[f64], t: f64) -> f64 {
    match times.len() {
        0 => 0.0,
        _ if t <= times[0] => values[0],
        n if t >= times[n - 1] => values[n - 1],
        _ => {
            let k = times.partition_point(|&s| s <= t);
            let (t0, t1) = (times[k - 1], times[k]);
            let (v0, v1) = (values[k - 1], values[k]);
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
    }
}
