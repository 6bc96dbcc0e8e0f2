//! Numerical checks of the Lyapunov argument behind the certificates: the
//! quadratic forms `Q₁..Q₇`, negativity of `Q̄(τ)`, the hybrid Lyapunov
//! function along simulated error trajectories, and the ISS constants.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{block_grid, max_eigenvalue, min_eigenvalue, spectral_norm};
use crate::lmi::{BlockMatrices, CertificateStage1, CertificateStage2, GainDesign};

/// Quadratic forms in `𝒳 = (z̃, e, ·, ·, ·, ·)`, each `6N × 6N` with `N = N_𝒪N_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QFamily {
    pub n: usize,
    pub t_bar: f64,
    pub q: [DMatrix<f64>; 7],
    pub r1: DMatrix<f64>,
    pub r2: DMatrix<f64>,
    pub r3: DMatrix<f64>,
}

impl QFamily {
    pub fn q(&self, i: usize) -> &DMatrix<f64> {
        &self.q[i - 1]
    }

    /// `R₁ + τR₂ + (T̄ − τ)R₃`
    pub fn qbar(&self, tau: f64) -> DMatrix<f64> {
        &self.r1 + &self.r2 * tau + &self.r3 * (self.t_bar - tau)
    }
}

fn selector(n: usize, slot: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(n, 6 * n);
    h.view_mut((0, slot * n), (n, n)).fill_with_identity();
    h
}

/// `M(𝐋) = [𝐀  𝐋𝐂*  𝐁  𝐁  I  I]`
pub fn error_map(bm: &BlockMatrices, l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = bm.dim();
    let eye = DMatrix::identity(n, n);
    block_grid(&[alloc::vec![bm.big_a.clone(), l * &bm.c_star, bm.big_b.clone(), bm.big_b.clone(), eye.clone(), eye]])
}

pub fn assemble_q_family(
    bm: &BlockMatrices,
    gains: &GainDesign,
    c1: &CertificateStage1,
    c2: &CertificateStage2,
) -> Result<QFamily> {
    let n = bm.dim();
    let t_bar = c2.t_bar;
    let hz = selector(n, 0);
    let he = selector(n, 1);
    let hd = &hz - &he;
    let m = error_map(bm, &gains.l);
    let p2_inv = c2
        .p2
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical("P₂ is not positive definite".into()))?;
    if c1.u.iter().any(|u| !(*u > 0.0)) {
        return Err(Error::Numerical("U is not positive definite".into()));
    }
    let u = c1.u_matrix();
    let u_inv = DMatrix::from_diagonal(&c1.u.map(|v| 1.0 / v));
    let uk = &u * &gains.k;
    let kc = &uk * &bm.c_star;

    let q1 = m.transpose() * &c1.p1 * &hz + hz.transpose() * &c1.p1 * &m;

    let z = DMatrix::zeros(n, n);
    let eye = DMatrix::<f64>::identity(n, n);
    let g = kc.transpose() * &u_inv * &bm.e_bar * &kc;
    let two_ue = &u * bm.e_bar_inv() * 2.0;
    let cu = -(bm.big_c.transpose() * &u);
    let kct = -kc.transpose();
    let q2 = block_grid(&[
        alloc::vec![-&eye * c1.nu, z.clone(), cu.clone(), kct.clone(), z.clone(), z.clone()],
        alloc::vec![z.clone(), -g, z.clone(), z.clone(), z.clone(), z.clone()],
        alloc::vec![cu.transpose(), z.clone(), two_ue.clone(), z.clone(), z.clone(), z.clone()],
        alloc::vec![kct.transpose(), z.clone(), z.clone(), two_ue, z.clone(), z.clone()],
        alloc::vec![z.clone(), z.clone(), z.clone(), z.clone(), &eye * c1.mu_d, z.clone()],
        alloc::vec![z.clone(), z.clone(), z.clone(), z.clone(), z.clone(), &eye * c1.mu_w],
    ]);

    let q3 = m.transpose() * &c2.p2 * &m;
    let nn = block_grid(&c2.n.iter().map(|b| alloc::vec![b.clone()]).collect::<Vec<_>>());
    let q4 = &nn * &p2_inv * nn.transpose();
    let q5 = &nn * &hd + hd.transpose() * nn.transpose();
    let q6 = -(hd.transpose() * &c2.p3 * &hd);
    let q7 = hd.transpose() * &c2.p3 * &m + m.transpose() * &c2.p3 * &hd;

    let r1 = &q3 * t_bar + &q5 + &q6;
    let r2 = q4.clone();
    let r3 = q7.clone();
    Ok(QFamily { n, t_bar, q: [q1, q2, q3, q4, q5, q6, q7], r1, r2, r3 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QbarReport {
    /// `(τ, λ_max(Q̄(τ)))` on the grid, endpoints included.
    pub grid: Vec<(f64, f64)>,
    pub worst: f64,
    pub worst_tau: f64,
    /// `κ = −max_τ λ_max(Q̄(τ))`; positive iff the certificate holds.
    pub kappa: f64,
    pub endpoints_negative: bool,
}

pub fn qbar_negative_on_grid(qf: &QFamily, n_grid: usize) -> Result<QbarReport> {
    if n_grid < 2 {
        return Err(Error::Parameter(format!("τ-grid needs at least 2 points, got {n_grid}")));
    }
    let grid: Vec<(f64, f64)> = (0..n_grid)
        .map(|i| {
            let tau = if i + 1 == n_grid { qf.t_bar } else { qf.t_bar * i as f64 / (n_grid - 1) as f64 };
            (tau, max_eigenvalue(&qf.qbar(tau)))
        })
        .collect();
    let (worst_tau, worst) = grid.iter().copied().fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    Ok(QbarReport {
        endpoints_negative: grid[0].1 < 0.0 && grid[n_grid - 1].1 < 0.0,
        kappa: -worst,
        worst,
        worst_tau,
        grid,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchurReport {
    pub lambda_max: f64,
    /// Largest eigenvalue of `T(E)ᵀ(Q₁ − Q₂)T(E)` over the sampled diagonals,
    /// where `T(E)` maps `(z̃, e, d̄, w̄')` to `𝒳 = (z̃, e, 𝐄𝐂z̃, 𝐄𝐊𝐂*e, 𝐁𝐄d̄, (𝐁𝐄𝐊 + 𝐋)w̄')`.
    pub worst_restricted: f64,
    pub samples: usize,
}

/// Checks `Q₁ − Q₂ ⪯ 0`, directly and restricted to the directions reachable
/// for random admissible `E = diag(ε)`, `ε_i ∈ [0, ζ_i]`.
pub fn schur_implication_check(
    bm: &BlockMatrices,
    gains: &GainDesign,
    qf: &QFamily,
    samples: usize,
    seed: u64,
) -> SchurReport {
    let n = qf.n;
    let d = qf.q(1) - qf.q(2);
    let lambda_max = max_eigenvalue(&d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zeta = bm.e_bar.diagonal();
    let mut worst = f64::NEG_INFINITY;
    let eye = DMatrix::<f64>::identity(n, n);
    let z = DMatrix::zeros(n, n);
    let m = bm.c_star.nrows();
    for _ in 0..samples {
        let e = DMatrix::from_diagonal(&DVector::from_iterator(n, zeta.iter().map(|&zi| rng.random_range(0.0..=zi))));
        let be = &bm.big_b * &e;
        let zm = DMatrix::zeros(n, m);
        let t = block_grid(&[
            alloc::vec![eye.clone(), z.clone(), z.clone(), zm.clone()],
            alloc::vec![z.clone(), eye.clone(), z.clone(), zm.clone()],
            alloc::vec![&e * &bm.big_c, z.clone(), z.clone(), zm.clone()],
            alloc::vec![z.clone(), &e * &gains.k * &bm.c_star, z.clone(), zm.clone()],
            alloc::vec![z.clone(), z.clone(), be.clone(), zm],
            alloc::vec![z.clone(), z.clone(), z.clone(), &be * &gains.k + &gains.l],
        ]);
        worst = worst.max(max_eigenvalue(&(t.transpose() * &d * &t)));
    }
    SchurReport { lambda_max, worst_restricted: worst, samples }
}

/// Stacked observer error at one stored instant.
///
/// At a sample time the trajectory holds two points with the same `t`: the
/// left limit (still in the previous segment) and the right limit, which
/// opens segment `k` and fixes `e = z̃(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorPoint {
    pub t: f64,
    pub segment: usize,
    pub z: DVector<f64>,
    pub z_dot: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovTerms {
    pub t: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    /// `|ξ|² = |z̃|² + |e|²`
    pub xi_sq: f64,
}

impl LyapunovTerms {
    pub fn total(&self) -> f64 {
        self.v1 + self.v2 + self.v3
    }
}

/// Evaluates `U = V₁ + V₂ + V₃` at every stored point; `V₂` uses the
/// trapezoidal rule over the stored points of the current segment.
pub fn lyapunov_series(
    points: &[ErrorPoint],
    c1: &CertificateStage1,
    c2: &CertificateStage2,
) -> Result<Vec<LyapunovTerms>> {
    let t_bar = c2.t_bar;
    let mut out = Vec::with_capacity(points.len());
    let mut seg: Option<usize> = None;
    let (mut t_k, mut e) = (0.0, DVector::zeros(0));
    let (mut int_f, mut int_sf) = (0.0, 0.0);
    let mut prev: Option<(f64, f64)> = None;
    for p in points {
        if seg != Some(p.segment) {
            seg = Some(p.segment);
            t_k = p.t;
            e = p.z.clone();
            int_f = 0.0;
            int_sf = 0.0;
            prev = None;
        }
        if p.z.len() != c1.p1.nrows() || e.len() != p.z.len() {
            return Err(Error::Dimension(format!(
                "error vector of length {} for P₁ of order {}",
                p.z.len(),
                c1.p1.nrows()
            )));
        }
        let f = p.z_dot.dot(&(&c2.p2 * &p.z_dot));
        if let Some((s0, f0)) = prev {
            let h = p.t - s0;
            int_f += 0.5 * h * (f0 + f);
            int_sf += 0.5 * h * (s0 * f0 + p.t * f);
        }
        prev = Some((p.t, f));
        let tau = p.t - t_k;
        let delta = &p.z - &e;
        out.push(LyapunovTerms {
            t: p.t,
            v1: p.z.dot(&(&c1.p1 * &p.z)),
            v2: (t_bar - p.t) * int_f + int_sf,
            v3: (t_bar - tau) * delta.dot(&(&c2.p3 * &delta)),
            xi_sq: p.z.norm_squared() + e.norm_squared(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichBounds {
    pub a_lower: f64,
    pub a_upper: f64,
}

pub fn sandwich_bounds(c1: &CertificateStage1, c2: &CertificateStage2) -> SandwichBounds {
    let t = c2.t_bar;
    SandwichBounds {
        a_lower: min_eigenvalue(&c1.p1),
        a_upper: max_eigenvalue(&c1.p1).max(t * t * max_eigenvalue(&c2.p2)).max(t * max_eigenvalue(&c2.p3)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub checked: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// Smallest `U / (a̲|ξ|²)` and largest `U / (ā|ξ|²)` seen.
    pub min_lower_ratio: f64,
    pub max_upper_ratio: f64,
    pub first_violation: Option<f64>,
}

pub fn check_sandwich(series: &[LyapunovTerms], bounds: SandwichBounds, rel_tol: f64) -> SandwichReport {
    let mut r = SandwichReport {
        checked: 0,
        lower_violations: 0,
        upper_violations: 0,
        min_lower_ratio: f64::INFINITY,
        max_upper_ratio: 0.0,
        first_violation: None,
    };
    for s in series {
        if s.xi_sq <= f64::MIN_POSITIVE {
            continue;
        }
        r.checked += 1;
        let u = s.total();
        let lo = u / (bounds.a_lower * s.xi_sq);
        let hi = u / (bounds.a_upper * s.xi_sq);
        r.min_lower_ratio = r.min_lower_ratio.min(lo);
        r.max_upper_ratio = r.max_upper_ratio.max(hi);
        let bad_lo = lo < 1.0 - rel_tol;
        let bad_hi = hi > 1.0 + rel_tol;
        r.lower_violations += bad_lo as usize;
        r.upper_violations += bad_hi as usize;
        if (bad_lo || bad_hi) && r.first_violation.is_none() {
            r.first_violation = Some(s.t);
        }
    }
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpReport {
    pub checked: usize,
    pub violations: usize,
    /// Largest `(U(t_k⁺) − U(t_k⁻)) / max(U(t_k⁻), tiny)`.
    pub worst_relative_increase: f64,
}

/// `U(t_k⁺) ≤ U(t_k⁻)` at every sample after the first.
pub fn check_jump_condition(points: &[ErrorPoint], series: &[LyapunovTerms], rel_tol: f64) -> JumpReport {
    let mut r = JumpReport { checked: 0, violations: 0, worst_relative_increase: f64::NEG_INFINITY };
    for i in 1..points.len() {
        let (a, b) = (&points[i - 1], &points[i]);
        if b.segment == a.segment + 1 && b.t == a.t {
            let (before, after) = (series[i - 1].total(), series[i].total());
            let rel = (after - before) / before.abs().max(f64::MIN_POSITIVE);
            r.checked += 1;
            r.worst_relative_increase = r.worst_relative_increase.max(rel);
            if after > before + rel_tol * before.abs() + 1e-300 {
                r.violations += 1;
            }
        }
    }
    r
}

/// Constants of the ISS estimate evaluated at one sector matrix `E`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IssConstants {
    pub pi: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovBounds {
    pub a_lower: f64,
    pub a_upper: f64,
    pub kappa: f64,
    /// At the worst case `E = Ē` and at `E = 0`.
    pub worst: IssConstants,
    pub zero_sector: IssConstants,
    pub n_observers: usize,
}

impl LyapunovBounds {
    pub fn decay_rate(&self) -> f64 {
        self.worst.pi / (2.0 * self.a_upper)
    }

    /// `β_ξ(r, t) = 2r√(ā/a̲) e^{−Π t / (2ā)}`
    pub fn beta_xi(&self, r: f64, t: f64) -> f64 {
        2.0 * r * libm::sqrt(self.a_upper / self.a_lower) * libm::exp(-self.decay_rate() * t)
    }

    /// `γ_ξ(r) = 2N_𝒪√(Θ/a̲) r`
    pub fn gamma_xi(&self, r: f64) -> f64 {
        2.0 * self.n_observers as f64 * libm::sqrt(self.worst.theta / self.a_lower) * r
    }

    pub fn beta_z(&self, r: f64, t: f64) -> f64 {
        2.0 * self.beta_xi(r, t)
    }

    pub fn gamma_z(&self, r: f64) -> f64 {
        self.gamma_xi(r)
    }
}

fn iss_at(
    bm: &BlockMatrices,
    gains: &GainDesign,
    c1: &CertificateStage1,
    kappa: f64,
    e: &DMatrix<f64>,
) -> IssConstants {
    let kc = &gains.k * &bm.c_star;
    let ec = spectral_norm(&(e * &bm.big_c));
    let ekc = spectral_norm(&(e * &kc));
    let pi = f64::min(c1.nu + kappa + kappa * ec * ec, kappa + kappa * ekc * ekc);
    let kcn = spectral_norm(&kc);
    let be = &bm.big_b * e;
    let bekl = spectral_norm(&(&be * &gains.k + &gains.l));
    let ben = spectral_norm(&be);
    let theta =
        f64::max(spectral_norm(&(c1.u_matrix() * e)) * kcn * kcn, f64::max(c1.mu_d * ben * ben, c1.mu_w * bekl * bekl));
    IssConstants { pi, theta }
}

pub fn iss_constants(
    bm: &BlockMatrices,
    gains: &GainDesign,
    c1: &CertificateStage1,
    c2: &CertificateStage2,
    kappa: f64,
) -> Result<LyapunovBounds> {
    if !(kappa > 0.0) {
        return Err(Error::Certificate(format!("κ = {kappa:.3e}: Q̄(τ) is not negative definite on [0, T̄]")));
    }
    let SandwichBounds { a_lower, a_upper } = sandwich_bounds(c1, c2);
    let n = bm.dim();
    Ok(LyapunovBounds {
        a_lower,
        a_upper,
        kappa,
        worst: iss_at(bm, gains, c1, kappa, &bm.e_bar),
        zero_sector: iss_at(bm, gains, c1, kappa, &DMatrix::zeros(n, n)),
        n_observers: bm.n_observers,
    })
}
