//! Bank of super- and sub-observers with zero-order-hold innovations and
//! consistency-based estimate selection.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lure::LureSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetKind {
    Super,
    Sub,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorSubset {
    /// Increasing 0-based sensor indices.
    pub indices: Vec<usize>,
    pub kind: SubsetKind,
}

impl SensorSubset {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_subset_of(&self, other: &SensorSubset) -> bool {
        self.indices.iter().all(|i| other.indices.contains(i))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetFamily {
    pub n_c: usize,
    pub n_a: usize,
    pub supers: Vec<SensorSubset>,
    pub subs: Vec<SensorSubset>,
    /// For each super, the indices (into `subs`) of the subs it contains.
    pub sub_of: Vec<Vec<usize>>,
}

impl SubsetFamily {
    /// All observers in bank order: supers first, then subs.
    pub fn all(&self) -> impl Iterator<Item = &SensorSubset> {
        self.supers.iter().chain(self.subs.iter())
    }

    pub fn n_observers(&self) -> usize {
        self.supers.len() + self.subs.len()
    }

    pub fn total_measurements(&self) -> usize {
        self.all().map(|s| s.len()).sum()
    }
}

/// k-element subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn enumerate_subsets(n_c: usize, n_a: usize) -> Result<SubsetFamily> {
    if 2 * n_a >= n_c {
        return Err(Error::AttackAssumption(format!("2·{n_a} ≥ N_c = {n_c}")));
    }
    let make =
        |k, kind| combinations(n_c, k).into_iter().map(|indices| SensorSubset { indices, kind }).collect::<Vec<_>>();
    let supers = make(n_c - n_a, SubsetKind::Super);
    let subs = make(n_c - 2 * n_a, SubsetKind::Sub);
    let sub_of = supers.iter().map(|sup| (0..subs.len()).filter(|&j| subs[j].is_subset_of(sup)).collect()).collect();
    Ok(SubsetFamily { n_c, n_a, supers, subs, sub_of })
}

pub fn restrict_rows(m: &DMatrix<f64>, s: &SensorSubset) -> Result<DMatrix<f64>> {
    if let Some(&i) = s.indices.iter().find(|&&i| i >= m.nrows()) {
        return Err(Error::IndexOutOfRange { index: i, size: m.nrows() });
    }
    Ok(m.select_rows(s.indices.iter()))
}

pub fn restrict_vec(v: &DVector<f64>, s: &SensorSubset) -> Result<DVector<f64>> {
    if let Some(&i) = s.indices.iter().find(|&&i| i >= v.len()) {
        return Err(Error::IndexOutOfRange { index: i, size: v.len() });
    }
    Ok(DVector::from_iterator(s.len(), s.indices.iter().map(|&i| v[i])))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGains {
    /// `N_c × |S|`
    pub k: DMatrix<f64>,
    /// `N_c × |S|`
    pub l: DMatrix<f64>,
}

impl ObserverGains {
    pub fn zeros(n_c: usize, m: usize) -> Self {
        Self { k: DMatrix::zeros(n_c, m), l: DMatrix::zeros(n_c, m) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverBank {
    pub family: SubsetFamily,
    /// One entry per observer in bank order.
    pub gains: Vec<ObserverGains>,
}

impl ObserverBank {
    pub fn new(family: SubsetFamily, gains: Vec<ObserverGains>) -> Result<Self> {
        if gains.len() != family.n_observers() {
            return Err(Error::Dimension(format!("{} gain pairs for {} observers", gains.len(), family.n_observers())));
        }
        for (s, g) in family.all().zip(&gains) {
            let shape = (family.n_c, s.len());
            if g.k.shape() != shape || g.l.shape() != shape {
                return Err(Error::Dimension(format!(
                    "gains {:?}/{:?} for subset {:?}, expected {shape:?}",
                    g.k.shape(),
                    g.l.shape(),
                    s.indices
                )));
            }
        }
        Ok(Self { family, gains })
    }

    pub fn with_zero_gains(family: SubsetFamily) -> Self {
        let gains = family.all().map(|s| ObserverGains::zeros(family.n_c, s.len())).collect();
        Self { family, gains }
    }

    /// Output-injection gains `L^S = −ℓ C_Sᵀ`, `K^S = 0`.
    pub fn with_injection(family: SubsetFamily, c: &DMatrix<f64>, ell: f64) -> Result<Self> {
        let gains = family
            .all()
            .map(|s| {
                let cs = restrict_rows(c, s)?;
                Ok(ObserverGains { k: DMatrix::zeros(family.n_c, s.len()), l: -cs.transpose() * ell })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(family, gains)
    }

    pub fn n_observers(&self) -> usize {
        self.family.n_observers()
    }
}

/// Values frozen at the latest sample for one observer.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldPacket {
    pub t_k: f64,
    pub x_hat: DVector<f64>,
    pub y: DVector<f64>,
    pub u: DVector<f64>,
    /// `C_S x̂(t_k) + u_S(t_k) − y_S(t_k)`
    pub innovation: DVector<f64>,
}

pub fn observer_derivative(
    sys: &LureSystem,
    s: &SensorSubset,
    gains: &ObserverGains,
    x_hat: &DVector<f64>,
    held: Option<&HeldPacket>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = sys.n_states();
    if x_hat.len() != n || u.len() != n {
        return Err(Error::Dimension(format!("observer of order {n} got x̂ {}, u {}", x_hat.len(), u.len())));
    }
    let zero;
    let inn = match held {
        Some(h) if h.innovation.len() == s.len() => &h.innovation,
        Some(h) => {
            return Err(Error::Dimension(format!(
                "held innovation has {} entries for a subset of {}",
                h.innovation.len(),
                s.len()
            )))
        }
        None => {
            zero = DVector::zeros(s.len());
            &zero
        }
    };
    Ok(derivative_with_innovation(sys, gains, x_hat, inn, u))
}

pub(crate) fn derivative_with_innovation(
    sys: &LureSystem,
    gains: &ObserverGains,
    x_hat: &DVector<f64>,
    inn: &DVector<f64>,
    u: &DVector<f64>,
) -> DVector<f64> {
    let m_hat = &sys.c * x_hat + u + &gains.k * inn;
    &sys.a * x_hat + &sys.b * sys.apply_phi(&m_hat) + &gains.l * inn
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverRuntime {
    pub x_hat: Vec<DVector<f64>>,
    pub held: Vec<Option<HeldPacket>>,
}

impl ObserverRuntime {
    pub fn new(x_hat: Vec<DVector<f64>>) -> Self {
        let held = alloc::vec![None; x_hat.len()];
        Self { x_hat, held }
    }

    pub fn last_sample_time(&self) -> Option<f64> {
        self.held.iter().flatten().map(|h| h.t_k).next()
    }

    /// Freezes `x̂^S(t_k)`, `y_S(t_k)` and `u_S(t_k)` for every observer. The
    /// estimates themselves are left untouched.
    pub fn on_packet(
        &mut self,
        bank: &ObserverBank,
        sys: &LureSystem,
        t_k: f64,
        y: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<()> {
        if let Some(held) = self.last_sample_time() {
            if t_k < held {
                return Err(Error::OutOfOrderPacket { t: t_k, held });
            }
        }
        if self.x_hat.len() != bank.n_observers() {
            return Err(Error::Dimension(format!(
                "{} estimates for {} observers",
                self.x_hat.len(),
                bank.n_observers()
            )));
        }
        for ((s, x_hat), slot) in bank.family.all().zip(&self.x_hat).zip(self.held.iter_mut()) {
            let y_s = restrict_vec(y, s)?;
            let u_s = restrict_vec(u, s)?;
            let innovation = restrict_rows(&sys.c, s)? * x_hat + &u_s - &y_s;
            *slot = Some(HeldPacket { t_k, x_hat: x_hat.clone(), y: y_s, u: u_s, innovation });
        }
        Ok(())
    }
}

/// `π^i = max_{j ∈ sub_of(i)} |x̂^i − x̂^j|` with estimates in bank order.
pub fn consistency_measures(estimates: &[DVector<f64>], family: &SubsetFamily) -> Vec<f64> {
    let n_super = family.supers.len();
    family
        .sub_of
        .iter()
        .enumerate()
        .map(|(i, subs)| subs.iter().map(|&j| (&estimates[i] - &estimates[n_super + j]).norm()).fold(0.0, f64::max))
        .collect()
}

/// Index of the smallest consistency measure, lowest index on ties.
pub fn select_index(pi: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in pi.iter().enumerate().skip(1) {
        if p < pi[best] {
            best = i;
        }
    }
    best
}

pub fn select_estimate(pi: &[f64], super_estimates: &[DVector<f64>]) -> (DVector<f64>, usize) {
    let sigma = select_index(pi);
    (super_estimates[sigma].clone(), sigma)
}
