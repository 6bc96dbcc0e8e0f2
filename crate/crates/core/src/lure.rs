//! Sector-bounded Lur'e plants `ẋ = Ax + Bφ(Cx + u + d)` and the radial
//! low-voltage grid instance with droop-controlled inverters.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::{table_lookup, Signal};

/// Breakpoints of a saturated dead zone, in V².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadZoneParams {
    pub q_bar: f64,
    pub w_min: f64,
    pub w_m: f64,
    pub w_n: f64,
    pub w_max: f64,
}

impl DeadZoneParams {
    pub fn validate(&self) -> Result<()> {
        let ordered = self.w_min <= self.w_m && self.w_m <= self.w_n && self.w_n <= self.w_max;
        // Both ramps must have positive width, otherwise the printed branches divide by zero.
        let ramps = self.w_min < self.w_m && self.w_n < self.w_max;
        if !ordered || !ramps || !(self.q_bar > 0.0) {
            return Err(Error::Parameter(format!("invalid dead-zone parameters {self:?}")));
        }
        Ok(())
    }

    pub fn lipschitz(&self) -> f64 {
        f64::max(self.q_bar / (self.w_m - self.w_min), self.q_bar / (self.w_max - self.w_n))
    }
}

pub fn dead_zone_phi(w: f64, p: &DeadZoneParams) -> Result<f64> {
    p.validate()?;
    Ok(dead_zone_unchecked(w, p))
}

fn dead_zone_unchecked(w: f64, p: &DeadZoneParams) -> f64 {
    if w <= p.w_min {
        -p.q_bar
    } else if w <= p.w_m {
        -(1.0 - (w - p.w_min) / (p.w_m - p.w_min)) * p.q_bar
    } else if w <= p.w_n {
        0.0
    } else if w <= p.w_max {
        (w - p.w_n) / (p.w_max - p.w_n) * p.q_bar
    } else {
        p.q_bar
    }
}

fn dead_zone_slope(w: f64, p: &DeadZoneParams) -> f64 {
    if w <= p.w_min || w > p.w_max || (w > p.w_m && w <= p.w_n) {
        0.0
    } else if w <= p.w_m {
        p.q_bar / (p.w_m - p.w_min)
    } else {
        p.q_bar / (p.w_max - p.w_n)
    }
}

/// Saturation limit `q̄ = √(s̄² − ρ_g²)` of an inverter.
pub fn saturation_limit(s_bar: f64, rho_g: f64) -> Result<f64> {
    if !(s_bar >= rho_g.abs()) {
        return Err(Error::Domain(format!("apparent power {s_bar} VA below active generation {rho_g} W")));
    }
    Ok(libm::sqrt(s_bar * s_bar - rho_g * rho_g))
}

/// Scalar nonlinearity acting on one channel.
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    DeadZone(DeadZoneParams),
    Affine {
        slope: f64,
        offset: f64,
    },
    /// Piecewise-linear through `(w, phi)` knots, extended with constant values.
    Table {
        w: Vec<f64>,
        phi: Vec<f64>,
    },
}

impl Nonlinearity {
    pub fn eval(&self, w: f64) -> f64 {
        match self {
            Nonlinearity::DeadZone(p) => dead_zone_unchecked(w, p),
            Nonlinearity::Affine { slope, offset } => slope * w + offset,
            Nonlinearity::Table { w: ws, phi } => table_lookup(ws, phi, w),
        }
    }

    /// Right-continuous slope at `w`, used for Newton steps.
    pub fn slope(&self, w: f64) -> f64 {
        match self {
            Nonlinearity::DeadZone(p) => dead_zone_slope(w, p),
            Nonlinearity::Affine { slope, .. } => *slope,
            Nonlinearity::Table { w: ws, phi } => {
                let n = ws.len();
                if n < 2 || w < ws[0] || w >= ws[n - 1] {
                    return 0.0;
                }
                let k = ws.partition_point(|&s| s <= w);
                (phi[k] - phi[k - 1]) / (ws[k] - ws[k - 1])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Nonlinearity::DeadZone(p) => p.validate(),
            Nonlinearity::Affine { slope, offset } if slope.is_finite() && offset.is_finite() => Ok(()),
            Nonlinearity::Affine { .. } => Err(Error::Parameter("non-finite affine branch".into())),
            Nonlinearity::Table { w, phi } => {
                if w.len() != phi.len() || w.is_empty() || w.windows(2).any(|p| p[0] >= p[1]) {
                    Err(Error::Parameter("table nonlinearity needs increasing knots".into()))
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LureSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub zeta: DVector<f64>,
    pub phi: Vec<Nonlinearity>,
}

impl LureSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        zeta: DVector<f64>,
        phi: Vec<Nonlinearity>,
    ) -> Result<Self> {
        let n = a.nrows();
        let square = |m: &DMatrix<f64>| m.shape() == (n, n);
        if n == 0 || !square(&a) || !square(&b) || !square(&c) || zeta.len() != n || phi.len() != n {
            return Err(Error::Dimension(format!(
                "A {:?}, B {:?}, C {:?}, zeta {}, phi {}",
                a.shape(),
                b.shape(),
                c.shape(),
                zeta.len(),
                phi.len()
            )));
        }
        if zeta.iter().any(|z| !(*z > 0.0)) {
            return Err(Error::Parameter("sector bounds must be positive".into()));
        }
        for p in &phi {
            p.validate()?;
        }
        Ok(Self { a, b, c, zeta, phi })
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn apply_phi(&self, w: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(w.len(), w.iter().zip(&self.phi).map(|(w, p)| p.eval(*w)))
    }

    pub fn plant_derivative(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n_states();
        if x.len() != n || u.len() != n || d.len() != n {
            return Err(Error::Dimension(format!(
                "plant of order {n} got x {}, u {}, d {}",
                x.len(),
                u.len(),
                d.len()
            )));
        }
        Ok(self.derivative_unchecked(x, u, d))
    }

    pub(crate) fn derivative_unchecked(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let m = &self.c * x + u + d;
        &self.a * x + &self.b * self.apply_phi(&m)
    }

    /// Solves `Ax + Bφ(Cx + u) = 0` by damped Newton iteration on the
    /// piecewise-linear residual.
    pub fn equilibrium(&self, u: &DVector<f64>, x0: &DVector<f64>) -> Result<DVector<f64>> {
        let zero = DVector::zeros(self.n_states());
        let residual = |x: &DVector<f64>| self.derivative_unchecked(x, u, &zero);
        let mut x = x0.clone();
        let mut r = residual(&x);
        for _ in 0..200 {
            let scale = 1.0 + x.amax();
            if r.amax() <= 1e-12 * scale {
                return Ok(x);
            }
            let m = &self.c * &x + u;
            let e = DMatrix::from_diagonal(&DVector::from_iterator(
                m.len(),
                m.iter().zip(&self.phi).map(|(w, p)| p.slope(*w)),
            ));
            let jac = &self.a + &self.b * e * &self.c;
            let step = jac
                .lu()
                .solve(&(-&r))
                .ok_or_else(|| Error::Numerical("singular Jacobian in equilibrium search".into()))?;
            let mut alpha = 1.0;
            loop {
                let trial = &x + &step * alpha;
                let rt = residual(&trial);
                if rt.norm() < r.norm() || alpha < 1e-8 {
                    x = trial;
                    r = rt;
                    break;
                }
                alpha *= 0.5;
            }
        }
        Err(Error::Numerical("equilibrium search did not converge".into()))
    }
}

/// Randomized check of `0 ≤ (φ(a) − φ(b))/(a − b) ≤ ζ` on `n_pairs` pairs per channel.
pub fn sector_check(phi: &[Nonlinearity], zeta: &[f64], n_pairs: usize, range: (f64, f64), seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-12;
    phi.iter().zip(zeta).all(|(p, &z)| {
        (0..n_pairs).all(|_| {
            let a = rng.random_range(range.0..range.1);
            let b = rng.random_range(range.0..range.1);
            if a == b {
                return true;
            }
            let s = (p.eval(a) - p.eval(b)) / (a - b);
            s >= -tol && s <= z * (1.0 + tol) + tol
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerConvention {
    /// `ρ = ρ_g − ρ_c`
    Net,
    /// `ρ = ρ_c`
    Consumption,
}

/// Dead-zone breakpoints shared by all inverters; `q̄` comes from the inverter ratings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadZoneShape {
    pub w_min: f64,
    pub w_m: f64,
    pub w_n: f64,
    pub w_max: f64,
}

impl Default for DeadZoneShape {
    fn default() -> Self {
        Self { w_min: -14899.4, w_m: 0.0, w_n: 0.0, w_max: 14899.4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTopology {
    pub line_r: Vec<f64>,
    pub line_x: Vec<f64>,
    pub service_r: Vec<f64>,
    pub service_x: Vec<f64>,
    pub a_g: Vec<f64>,
    pub s_bar: Vec<f64>,
    pub rho_g: Vec<f64>,
    pub rho_c: Vec<f64>,
    pub q_c: Vec<f64>,
    pub v_bar: f64,
    pub v0: Signal,
    pub dead_zone: DeadZoneShape,
    pub power_convention: PowerConvention,
}

impl GridTopology {
    /// Radial feeder of the residential benchmark with five customers.
    pub fn benchmark_feeder() -> Self {
        Self {
            line_r: alloc::vec![0.00343, 0.00172, 0.00343, 0.00515, 0.00172],
            line_x: alloc::vec![0.04711, 0.02356, 0.04711, 0.07067, 0.02356],
            service_r: alloc::vec![0.00147, 0.00662, 0.00147, 0.00147, 0.00147],
            service_x: alloc::vec![0.02157, 0.09707, 0.02157, 0.02157, 0.02157],
            a_g: alloc::vec![1.0; 5],
            s_bar: alloc::vec![4200.0, 6500.0, 4700.0, 5300.0, 3600.0],
            rho_g: alloc::vec![3500.0, 5500.0, 4000.0, 4500.0, 3000.0],
            rho_c: alloc::vec![2295.0, 5440.0, 5440.0, 2295.0, 2720.0],
            q_c: alloc::vec![300.0, 960.0, 480.0, 600.0, 400.0],
            v_bar: 230.0,
            v0: Signal::Sine { offset: 230.0, amplitude: 1.0, omega: 5.0, phase: 0.0 },
            dead_zone: DeadZoneShape::default(),
            power_convention: PowerConvention::Net,
        }
    }

    /// The first `n` customers of the feeder.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_customers() {
            return Err(Error::IndexOutOfRange { index: n, size: self.n_customers() });
        }
        let cut = |v: &Vec<f64>| v[..n].to_vec();
        Ok(Self {
            line_r: cut(&self.line_r),
            line_x: cut(&self.line_x),
            service_r: cut(&self.service_r),
            service_x: cut(&self.service_x),
            a_g: cut(&self.a_g),
            s_bar: cut(&self.s_bar),
            rho_g: cut(&self.rho_g),
            rho_c: cut(&self.rho_c),
            q_c: cut(&self.q_c),
            ..self.clone()
        })
    }

    pub fn n_customers(&self) -> usize {
        self.line_x.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_customers();
        let vectors = [
            ("line_R", &self.line_r),
            ("line_X", &self.line_x),
            ("service_R", &self.service_r),
            ("service_X", &self.service_x),
            ("a_g", &self.a_g),
            ("s_bar", &self.s_bar),
            ("rho_g", &self.rho_g),
            ("rho_c", &self.rho_c),
            ("q_c", &self.q_c),
        ];
        if n == 0 {
            return Err(Error::Dimension("grid without customers".into()));
        }
        for (name, v) in vectors {
            if v.len() != n {
                return Err(Error::Dimension(format!("{name} has {} entries, expected {n}", v.len())));
            }
        }
        for (name, v) in &vectors[..4] {
            if v.iter().any(|r| !(*r >= 0.0)) {
                return Err(Error::Parameter(format!("{name} must be nonnegative")));
            }
        }
        if self.a_g.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::Parameter("a_g must be positive".into()));
        }
        for (s, r) in self.s_bar.iter().zip(&self.rho_g) {
            saturation_limit(*s, *r)?;
        }
        Ok(())
    }

    pub fn q_bar(&self) -> Result<Vec<f64>> {
        self.s_bar.iter().zip(&self.rho_g).map(|(s, r)| saturation_limit(*s, *r)).collect()
    }

    /// Active power argument of the disturbance terms under the configured convention.
    pub fn rho(&self) -> Vec<f64> {
        match self.power_convention {
            PowerConvention::Net => self.rho_g.iter().zip(&self.rho_c).map(|(g, c)| g - c).collect(),
            PowerConvention::Consumption => self.rho_c.clone(),
        }
    }

    /// `C = −2·[Σ_{k≤min(i,j)} X_k] − 2·diag(X′)`.
    pub fn c_matrix(&self) -> DMatrix<f64> {
        let n = self.n_customers();
        let mut cum = Vec::with_capacity(n);
        let mut acc = 0.0;
        for x in &self.line_x {
            acc += x;
            cum.push(acc);
        }
        DMatrix::from_fn(n, n, |i, j| {
            let service = if i == j { self.service_x[i] } else { 0.0 };
            -2.0 * cum[i.min(j)] - 2.0 * service
        })
    }

    /// `β′_j(ρ, q) = R′_j ρ + X′_j q` (0-based `j`).
    fn beta_prime(&self, j: usize, rho: f64, q: f64) -> f64 {
        self.service_r[j] * rho + self.service_x[j] * q
    }

    /// `ō_j` for 0-based `j`; the downstream β′ term is absent for the last customer.
    fn o_bar(&self, j: usize, rho: &[f64], q_c: &[f64]) -> f64 {
        let n = self.n_customers();
        let downstream: f64 = ((j + 1)..n).map(|k| self.line_x[j] * q_c[k] - self.line_r[j] * rho[k]).sum();
        let drop = if j + 1 < n { self.beta_prime(j, rho[j + 1], q_c[j + 1]) } else { 0.0 };
        2.0 * downstream - 2.0 * drop
    }

    /// Disturbance `o_i(ρ, q_c)` for a 0-based customer index.
    pub fn disturbance_o(&self, rho: &[f64], q_c: &[f64], i: usize) -> Result<f64> {
        let n = self.n_customers();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, size: n });
        }
        if rho.len() != n || q_c.len() != n {
            return Err(Error::Dimension(format!("power vectors must have {n} entries")));
        }
        let obar: f64 = (0..=i).map(|j| self.o_bar(j, rho, q_c)).sum();
        let drops: f64 = (0..i).map(|j| self.beta_prime(j, rho[j], q_c[j])).sum();
        Ok(obar + drops)
    }

    pub fn offsets(&self) -> Result<DVector<f64>> {
        let rho = self.rho();
        let n = self.n_customers();
        let o = (0..n).map(|i| self.disturbance_o(&rho, &self.q_c, i)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(o))
    }

    /// Auxiliary input `u_i = v̄² − v₀(t)² + o_i`.
    pub fn input(&self, offsets: &DVector<f64>, t: f64) -> DVector<f64> {
        let v0 = self.v0.eval(t);
        offsets.map(|o| self.v_bar * self.v_bar - v0 * v0 + o)
    }

    pub fn build_lure(&self) -> Result<LureSystem> {
        self.validate()?;
        let n = self.n_customers();
        let a = DMatrix::from_diagonal(&DVector::from_iterator(n, self.a_g.iter().map(|a| -a)));
        let b = -&a;
        let phi = self
            .q_bar()?
            .into_iter()
            .map(|q_bar| {
                Nonlinearity::DeadZone(DeadZoneParams {
                    q_bar,
                    w_min: self.dead_zone.w_min,
                    w_m: self.dead_zone.w_m,
                    w_n: self.dead_zone.w_n,
                    w_max: self.dead_zone.w_max,
                })
            })
            .collect();
        LureSystem::new(a, b, self.c_matrix(), DVector::from_element(n, 1.0), phi)
    }
}

/// Squared voltages `v_i² = C_i x − o_i + v₀²` together with the indices where
/// the result is negative (outside the model's regime).
pub fn voltage_from_state(
    c: &DMatrix<f64>,
    x: &DVector<f64>,
    offsets: &DVector<f64>,
    v0: f64,
) -> Result<(DVector<f64>, Vec<usize>)> {
    if c.ncols() != x.len() || c.nrows() != offsets.len() {
        return Err(Error::Dimension(format!("C {:?}, x {}, offsets {}", c.shape(), x.len(), offsets.len())));
    }
    if !(v0 > 0.0) {
        return Err(Error::Domain(format!("substation voltage {v0} must be positive")));
    }
    let v2 = c * x - offsets + DVector::from_element(offsets.len(), v0 * v0);
    let violations = v2.iter().enumerate().filter(|(_, v)| **v < 0.0).map(|(i, _)| i).collect();
    Ok((v2, violations))
}
