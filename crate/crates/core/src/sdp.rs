//! Primal-dual interior-point solver for block-diagonal LMI problems
//!
//! ```text
//! maximize bᵀy  subject to  S = C − Σ yᵢ Aᵢ ⪰ 0
//! ```
//!
//! with the HKM search direction and Mehrotra's predictor-corrector. A
//! facial-reduction pass removes diagonal entries that vanish for every value
//! of the variables before the problem reaches the solver.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::expr::AffineExpr;
use crate::linalg::{min_eigenvalue, symmetrize};

/// Upper-triangular entries `(r, c, v)` with `r ≤ c` of a symmetric matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseSym {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut entries = Vec::new();
        for c in 0..n {
            for r in 0..=c {
                let v = 0.5 * (m[(r, c)] + m[(c, r)]);
                if v != 0.0 {
                    entries.push((r, c, v));
                }
            }
        }
        Self { entries }
    }

    /// `tr(self · T)` for a general square `T`.
    fn trace_with(&self, t: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(r, c, v)| if r == c { v * t[(r, r)] } else { v * (t[(r, c)] + t[(c, r)]) }).sum()
    }

    fn add_scaled_to(&self, out: &mut DMatrix<f64>, s: f64) {
        for &(r, c, v) in &self.entries {
            out[(r, c)] += s * v;
            if r != c {
                out[(c, r)] += s * v;
            }
        }
    }

    /// `X · self` for dense `X`.
    fn left_mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for &(r, c, v) in &self.entries {
            for i in 0..x.nrows() {
                out[(i, c)] += v * x[(i, r)];
            }
            if r != c {
                for i in 0..x.nrows() {
                    out[(i, r)] += v * x[(i, c)];
                }
            }
        }
        out
    }

    fn frobenius(&self) -> f64 {
        libm::sqrt(self.entries.iter().map(|&(r, c, v)| if r == c { v * v } else { 2.0 * v * v }).sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpBlock {
    pub c: DMatrix<f64>,
    pub a: Vec<(usize, SparseSym)>,
}

impl SdpBlock {
    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    /// Block for the constraint `F(y) ⪰ 0`.
    pub fn from_lmi(f: &AffineExpr) -> Self {
        let c = symmetrize(&f.constant);
        let a = f
            .coeffs
            .iter()
            .map(|(v, m)| (*v, SparseSym::from_dense(&(-m))))
            .filter(|(_, s)| !s.entries.is_empty())
            .collect();
        Self { c, a }
    }

    fn slack(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut s = self.c.clone();
        for (v, a) in &self.a {
            a.add_scaled_to(&mut s, -y[*v]);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sdp {
    pub n_vars: usize,
    pub b: DVector<f64>,
    pub blocks: Vec<SdpBlock>,
}

impl Sdp {
    /// `maximize objectiveᵀy subject to F_k(y) ⪰ 0` for every `F_k` in `lmis`.
    pub fn from_lmis(n_vars: usize, objective: DVector<f64>, lmis: &[AffineExpr]) -> Self {
        Self { n_vars, b: objective, blocks: lmis.iter().map(SdpBlock::from_lmi).collect() }
    }

    /// `(tr(A_i X))_i`; `X` need not be symmetric.
    fn apply(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_vars);
        for (blk, xb) in self.blocks.iter().zip(x) {
            for (v, a) in &blk.a {
                out[*v] += a.trace_with(xb);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub step_fraction: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self { max_iter: 120, tol: 1e-8, step_fraction: 0.95 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// Progress stopped before the tolerances were met; the last iterate is returned.
    Stalled,
    MaxIterations,
}

/// Residuals at the start of one interior-point iteration and the steps taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpIterate {
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub gap: f64,
    pub mu: f64,
    pub primal_step: f64,
    pub dual_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub y: DVector<f64>,
    pub x: Vec<DMatrix<f64>>,
    pub s: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    pub trace: Vec<SdpIterate>,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Largest `α` with `X + αΔ ⪰ 0`, infinite if the direction never leaves the cone.
fn max_step(x: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let Some(ch) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = ch.l();
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let w = &linv * d * linv.transpose();
    let lmin = min_eigenvalue(&w);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn inverse_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Cholesky::<f64, Dyn>::new(symmetrize(m)).map(|c| c.inverse())
}

pub fn solve(p: &Sdp, settings: &SdpSettings) -> SdpSolution {
    let nb = p.blocks.len();
    let n_total: usize = p.blocks.iter().map(|b| b.dim()).sum();
    let norm_b = p.b.norm();
    let norm_c = libm::sqrt(p.blocks.iter().map(|b| b.c.norm_squared()).sum::<f64>());

    let mut x = Vec::with_capacity(nb);
    let mut s = Vec::with_capacity(nb);
    for blk in &p.blocks {
        let n = blk.dim() as f64;
        let max_a = blk.a.iter().map(|(_, a)| a.frobenius()).fold(0.0, f64::max);
        let ratio = blk.a.iter().map(|(v, a)| (1.0 + p.b[*v].abs()) / (1.0 + a.frobenius())).fold(0.0, f64::max);
        let xi = f64::max(10.0, f64::max(libm::sqrt(n), n * ratio));
        let eta = f64::max(10.0, f64::max(libm::sqrt(n), f64::max(max_a, blk.c.norm())));
        x.push(DMatrix::identity(blk.dim(), blk.dim()) * xi);
        s.push(DMatrix::identity(blk.dim(), blk.dim()) * eta);
    }
    let mut y = DVector::zeros(p.n_vars);

    let mut status = SdpStatus::MaxIterations;
    let mut iterations = 0;
    let mut stall = 0;
    let mut pinf = f64::INFINITY;
    let mut dinf = f64::INFINITY;
    let mut trace = Vec::new();
    for it in 0..settings.max_iter {
        iterations = it;
        let ax = p.apply(&x);
        let rp = &p.b - &ax;
        let rd: Vec<DMatrix<f64>> = p.blocks.iter().zip(&s).map(|(blk, sb)| blk.slack(&y) - sb).collect();
        let pobj: f64 = p.blocks.iter().zip(&x).map(|(blk, xb)| inner(&blk.c, xb)).sum();
        let dobj = p.b.dot(&y);
        let mu = x.iter().zip(&s).map(|(a, b)| inner(a, b)).sum::<f64>() / n_total as f64;
        pinf = rp.norm() / (1.0 + norm_b);
        dinf = libm::sqrt(rd.iter().map(|r| r.norm_squared()).sum::<f64>()) / (1.0 + norm_c);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let compl = mu * n_total as f64 / (1.0 + pobj.abs() + dobj.abs());
        trace.push(SdpIterate {
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            gap: gap.max(compl),
            mu,
            primal_step: 0.0,
            dual_step: 0.0,
        });
        if pinf < settings.tol && dinf < settings.tol && gap.max(compl) < settings.tol {
            status = SdpStatus::Optimal;
            break;
        }

        let Some(s_inv) = s.iter().map(inverse_spd).collect::<Option<Vec<_>>>() else {
            status = SdpStatus::Stalled;
            break;
        };

        // Schur complement M_ij = Σ tr(A_i X A_j S⁻¹).
        let mut m = DMatrix::<f64>::zeros(p.n_vars, p.n_vars);
        for ((blk, xb), sib) in p.blocks.iter().zip(&x).zip(&s_inv) {
            for (j, aj) in &blk.a {
                let t = aj.left_mul(xb) * sib;
                for (i, ai) in &blk.a {
                    if i <= j {
                        m[(*i, *j)] += ai.trace_with(&t);
                    }
                }
            }
        }
        for j in 0..p.n_vars {
            for i in 0..j {
                m[(j, i)] = m[(i, j)];
            }
        }
        let max_diag = (0..p.n_vars).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
        let chol = Cholesky::new(m.clone()).or_else(|| {
            let mut reg = m.clone();
            for i in 0..p.n_vars {
                reg[(i, i)] += 1e-13 * max_diag.max(1.0);
            }
            Cholesky::new(reg)
        });
        let Some(chol) = chol else {
            status = SdpStatus::Stalled;
            break;
        };

        let x_rd_si: Vec<DMatrix<f64>> = x.iter().zip(&rd).zip(&s_inv).map(|((xb, r), si)| xb * r * si).collect();
        let a_x_rd_si = p.apply(&x_rd_si);
        let a_s_inv = p.apply(&s_inv);

        let direction = |sigma_mu: f64, corr: Option<&Vec<DMatrix<f64>>>| {
            let mut rhs = &p.b - &a_s_inv * sigma_mu + &a_x_rd_si;
            if let Some(c) = corr {
                rhs += p.apply(c);
            }
            let dy = chol.solve(&rhs);
            let mut dx = Vec::with_capacity(nb);
            let mut ds = Vec::with_capacity(nb);
            for k in 0..nb {
                let mut dsk = rd[k].clone();
                for (v, a) in &p.blocks[k].a {
                    a.add_scaled_to(&mut dsk, -dy[*v]);
                }
                let mut dxk = &s_inv[k] * sigma_mu - &x[k] - &x[k] * &dsk * &s_inv[k];
                if let Some(c) = corr {
                    dxk -= &c[k];
                }
                dx.push(symmetrize(&dxk));
                ds.push(symmetrize(&dsk));
            }
            (dx, dy, ds)
        };
        let step_lengths = |dx: &[DMatrix<f64>], ds: &[DMatrix<f64>]| {
            let ap = x.iter().zip(dx).map(|(a, d)| max_step(a, d)).fold(f64::INFINITY, f64::min);
            let ad = s.iter().zip(ds).map(|(a, d)| max_step(a, d)).fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        // Predictor.
        let (dx_a, _, ds_a) = direction(0.0, None);
        let (ap, ad) = step_lengths(&dx_a, &ds_a);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mu_aff = x
            .iter()
            .zip(&dx_a)
            .zip(s.iter().zip(&ds_a))
            .map(|((xb, dxb), (sb, dsb))| inner(&(xb + dxb * ap), &(sb + dsb * ad)))
            .sum::<f64>()
            / n_total as f64;
        let sigma = libm::pow((mu_aff / mu).clamp(0.0, 1.0), 3.0);

        // Corrector.
        let corr: Vec<DMatrix<f64>> =
            dx_a.iter().zip(&ds_a).zip(&s_inv).map(|((dxb, dsb), si)| dxb * dsb * si).collect();
        let (dx, dy, ds) = direction(sigma * mu, Some(&corr));
        let (ap, ad) = step_lengths(&dx, &ds);
        let ap = (settings.step_fraction * ap).min(1.0);
        let ad = (settings.step_fraction * ad).min(1.0);
        if let Some(last) = trace.last_mut() {
            last.primal_step = ap;
            last.dual_step = ad;
        }
        if ap < 1e-10 && ad < 1e-10 {
            stall += 1;
            if stall > 3 {
                status = SdpStatus::Stalled;
                break;
            }
        } else {
            stall = 0;
        }
        for k in 0..nb {
            x[k] = symmetrize(&(&x[k] + &dx[k] * ap));
            s[k] = symmetrize(&(&s[k] + &ds[k] * ad));
        }
        y += dy * ad;
        iterations = it + 1;
    }

    let primal_objective = p.blocks.iter().zip(&x).map(|(blk, xb)| inner(&blk.c, xb)).sum();
    let dual_objective = p.b.dot(&y);
    SdpSolution {
        status,
        y,
        x,
        s,
        primal_objective,
        dual_objective,
        primal_infeasibility: pinf,
        dual_infeasibility: dinf,
        iterations,
        trace,
    }
}

/// Affine substitution `y = offset + Σ_j z_j · columns[j]` produced by facial reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct VarMap {
    pub offset: DVector<f64>,
    pub columns: Vec<Vec<(usize, f64)>>,
}

impl VarMap {
    pub fn identity(n: usize) -> Self {
        Self { offset: DVector::zeros(n), columns: (0..n).map(|i| alloc::vec![(i, 1.0)]).collect() }
    }

    pub fn n_reduced(&self) -> usize {
        self.columns.len()
    }

    pub fn expand(&self, z: &[f64]) -> DVector<f64> {
        let mut y = self.offset.clone();
        for (col, zj) in self.columns.iter().zip(z) {
            for (i, v) in col {
                y[*i] += v * zj;
            }
        }
        y
    }

    /// Reduced index of an original variable that maps one-to-one, if any.
    pub fn reduced_index_of(&self, original: usize) -> Option<usize> {
        self.columns.iter().position(|c| c.len() == 1 && c[0] == (original, 1.0))
    }

    /// `self ∘ inner`: first apply `inner` (w ↦ z), then `self` (z ↦ y).
    fn compose(&self, inner: &VarMap) -> VarMap {
        let offset = self.expand(inner.offset.as_slice());
        let columns = inner
            .columns
            .iter()
            .map(|col| {
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                for (z, w) in col {
                    for (i, v) in &self.columns[*z] {
                        *acc.entry(*i).or_insert(0.0) += v * w;
                    }
                }
                acc.into_iter().filter(|(_, v)| *v != 0.0).collect()
            })
            .collect();
        VarMap { offset, columns }
    }
}

/// Why an LMI system cannot be satisfied, found without running the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralObstruction {
    pub block: usize,
    pub row: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacialReduction {
    pub lmis: Vec<AffineExpr>,
    pub map: VarMap,
    /// Per block, the original row indices that survived.
    pub kept_rows: Vec<Vec<usize>>,
    /// Total rows removed because their diagonal vanishes identically.
    pub removed_rows: usize,
}

fn is_negligible(v: f64, scale: f64) -> bool {
    v.abs() <= 1e-13 * scale
}

fn expr_scale(e: &AffineExpr) -> f64 {
    e.coeffs.values().map(|c| c.amax()).fold(e.constant.amax(), f64::max).max(1.0)
}

/// Diagonal positions of `f` that vanish for every value of the variables.
pub fn structural_zero_diagonals(f: &AffineExpr) -> Vec<usize> {
    let scale = expr_scale(f);
    (0..f.constant.nrows())
        .filter(|&k| {
            is_negligible(f.constant[(k, k)], scale) && f.coeffs.values().all(|c| is_negligible(c[(k, k)], scale))
        })
        .collect()
}

/// For each structurally zero diagonal entry of a strict inequality `F(y) ≻ 0`
/// the whole system is infeasible; reports the first one found.
pub fn strict_obstruction(lmis: &[AffineExpr]) -> Option<StructuralObstruction> {
    lmis.iter().enumerate().find_map(|(b, f)| {
        structural_zero_diagonals(f).first().map(|&row| StructuralObstruction {
            block: b,
            row,
            detail: format!("diagonal entry {row} of block {b} is identically zero in a strict inequality"),
        })
    })
}

/// Solves `E y = f` for the variables in `cols`; returns the substitution or
/// `None` when the system is inconsistent.
fn affine_solution_set(rows: &[(BTreeMap<usize, f64>, f64)], n_vars: usize) -> Option<VarMap> {
    let mut cols: Vec<usize> = rows.iter().flat_map(|(r, _)| r.keys().copied()).collect();
    cols.sort_unstable();
    cols.dedup();
    let col_pos: BTreeMap<usize, usize> = cols.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let nr = rows.len();
    let nc = cols.len();
    let mut e = DMatrix::zeros(nr, nc + 1);
    for (i, (r, f)) in rows.iter().enumerate() {
        for (v, a) in r {
            e[(i, col_pos[v])] = *a;
        }
        e[(i, nc)] = *f;
    }
    let scale = e.amax().max(1.0);
    let tol = 1e-10 * scale;
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut row = 0;
    for col in 0..nc {
        if row == nr {
            break;
        }
        let (best, val) =
            (row..nr).map(|r| (r, e[(r, col)].abs())).fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol {
            continue;
        }
        e.swap_rows(row, best);
        let piv = e[(row, col)];
        for c in 0..=nc {
            e[(row, c)] /= piv;
        }
        for r in 0..nr {
            if r != row {
                let factor = e[(r, col)];
                if factor != 0.0 {
                    for c in 0..=nc {
                        let v = e[(row, c)];
                        e[(r, c)] -= factor * v;
                    }
                }
            }
        }
        pivots.push((row, col));
        row += 1;
    }
    if (row..nr).any(|r| e[(r, nc)].abs() > tol) {
        return None;
    }
    let pivot_cols: Vec<usize> = pivots.iter().map(|p| p.1).collect();
    let mut map = VarMap { offset: DVector::zeros(n_vars), columns: Vec::new() };
    for &(r, c) in &pivots {
        map.offset[cols[c]] = e[(r, nc)];
    }
    for v in 0..n_vars {
        match col_pos.get(&v) {
            Some(c) if pivot_cols.contains(c) => {}
            Some(&c) => {
                let mut col = alloc::vec![(v, 1.0)];
                for &(r, pc) in &pivots {
                    let a = e[(r, c)];
                    if a.abs() > tol {
                        col.push((cols[pc], -a));
                    }
                }
                map.columns.push(col);
            }
            None => map.columns.push(alloc::vec![(v, 1.0)]),
        }
    }
    Some(map)
}

pub fn substitute_expr(f: &AffineExpr, map: &VarMap) -> AffineExpr {
    let mut constant = f.constant.clone();
    for (v, c) in &f.coeffs {
        let o = map.offset[*v];
        if o != 0.0 {
            constant += c * o;
        }
    }
    let mut coeffs = BTreeMap::new();
    for (j, col) in map.columns.iter().enumerate() {
        let mut acc: Option<DMatrix<f64>> = None;
        for (i, w) in col {
            if let Some(c) = f.coeffs.get(i) {
                match &mut acc {
                    Some(m) => *m += c * *w,
                    None => acc = Some(c * *w),
                }
            }
        }
        if let Some(m) = acc {
            coeffs.insert(j, m);
        }
    }
    let mut out = AffineExpr { constant, coeffs };
    out.prune();
    out
}

fn remove_rows(f: &AffineExpr, drop: &[usize]) -> AffineExpr {
    let keep: Vec<usize> = (0..f.constant.nrows()).filter(|k| !drop.contains(k)).collect();
    let pick = |m: &DMatrix<f64>| m.select_rows(keep.iter()).select_columns(keep.iter());
    let mut out =
        AffineExpr { constant: pick(&f.constant), coeffs: f.coeffs.iter().map(|(v, c)| (*v, pick(c))).collect() };
    out.prune();
    out
}

/// Facial reduction for non-strict LMIs `F_k(y) ⪰ 0`: a diagonal entry that is
/// identically zero forces its whole row to vanish. The resulting linear
/// equalities are eliminated by substitution, the rows dropped, and the pass
/// repeated until no such entries remain. Variables that no longer appear in
/// any block are fixed at zero.
pub fn facial_reduction(lmis: &[AffineExpr], n_vars: usize) -> Result<FacialReduction, StructuralObstruction> {
    let mut current: Vec<AffineExpr> = lmis.to_vec();
    let mut kept_rows: Vec<Vec<usize>> = lmis.iter().map(|f| (0..f.constant.nrows()).collect()).collect();
    let mut map = VarMap::identity(n_vars);
    let mut removed_rows = 0;
    loop {
        let mut eqs: Vec<(BTreeMap<usize, f64>, f64)> = Vec::new();
        let mut touched = false;
        for (b, f) in current.iter_mut().enumerate() {
            let zeros = structural_zero_diagonals(f);
            if zeros.is_empty() {
                continue;
            }
            touched = true;
            let scale = expr_scale(f);
            for &k in &zeros {
                for j in 0..f.constant.nrows() {
                    let mut row = BTreeMap::new();
                    for (v, c) in &f.coeffs {
                        if !is_negligible(c[(k, j)], scale) {
                            row.insert(*v, c[(k, j)]);
                        }
                    }
                    let rhs = -f.constant[(k, j)];
                    if row.is_empty() {
                        if !is_negligible(rhs, scale) {
                            return Err(StructuralObstruction {
                                block: b,
                                row: kept_rows[b][k],
                                detail: format!(
                                    "row {} of block {b} has a zero diagonal but a constant off-diagonal entry",
                                    kept_rows[b][k]
                                ),
                            });
                        }
                        continue;
                    }
                    eqs.push((row, rhs));
                }
            }
            *f = remove_rows(f, &zeros);
            removed_rows += zeros.len();
            let kept = &mut kept_rows[b];
            *kept = kept.iter().enumerate().filter(|(i, _)| !zeros.contains(i)).map(|(_, r)| *r).collect();
        }
        if !touched {
            break;
        }
        if eqs.is_empty() {
            continue;
        }
        let n_cur = map.n_reduced();
        let Some(step) = affine_solution_set(&eqs, n_cur) else {
            return Err(StructuralObstruction {
                block: 0,
                row: 0,
                detail: "zero-diagonal rows impose inconsistent linear equalities".into(),
            });
        };
        current = current.iter().map(|f| substitute_expr(f, &step)).collect();
        map = map.compose(&step);
    }
    // Fix unused variables at zero.
    let mut used: Vec<usize> = current.iter().flat_map(|f| f.coeffs.keys().copied()).collect();
    used.sort_unstable();
    used.dedup();
    if used.len() < map.n_reduced() {
        let step = VarMap {
            offset: DVector::zeros(map.n_reduced()),
            columns: used.iter().map(|&v| alloc::vec![(v, 1.0)]).collect(),
        };
        current = current.iter().map(|f| substitute_expr(f, &step)).collect();
        map = map.compose(&step);
    }
    Ok(FacialReduction { lmis: current, map, kept_rows, removed_rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::MatExpr;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_lp() {
        // maximize y subject to 1 − y ≥ 0 and y + 2 ≥ 0
        let y = AffineExpr::scalar_var(0);
        let one = AffineExpr::constant(DMatrix::from_element(1, 1, 1.0));
        let two = AffineExpr::constant(DMatrix::from_element(1, 1, 2.0));
        let p = Sdp::from_lmis(1, DVector::from_element(1, 1.0), &[one.sub(&y), y.add(&two)]);
        let sol = solve(&p, &SdpSettings::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_relative_eq!(sol.y[0], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn max_eigenvalue_as_sdp() {
        // maximize t subject to M − tI ⪰ 0 gives λ_min(M)
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let t = AffineExpr::scalar_var(0);
        let f = AffineExpr::constant(m.clone()).sub(&AffineExpr::scalar_identity(&t, 3));
        let sol = solve(&Sdp::from_lmis(1, DVector::from_element(1, 1.0), &[f]), &SdpSettings::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_relative_eq!(sol.y[0], min_eigenvalue(&m), epsilon = 1e-7);
    }

    #[test]
    fn facial_reduction_forces_coupling_to_zero() {
        // [[1, g], [g, 0]] ⪰ 0 forces g = 0.
        let g = AffineExpr::scalar_var(0);
        let f = AffineExpr::grid(&[
            alloc::vec![AffineExpr::constant(DMatrix::from_element(1, 1, 1.0)), g.clone()],
            alloc::vec![g, AffineExpr::zeros(1, 1)],
        ]);
        let red = facial_reduction(&[f], 1).unwrap();
        assert_eq!(red.map.n_reduced(), 0);
        assert_eq!(red.map.expand(&[])[0], 0.0);
        assert_eq!(red.lmis[0].constant.shape(), (1, 1));
    }

    #[test]
    fn facial_reduction_detects_constant_coupling() {
        let f = AffineExpr::constant(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]));
        assert!(facial_reduction(&[f], 0).is_err());
    }
}
