//! Matrix-inequality conditions of the multi-observer error system and the
//! two-stage synthesis of gains and certificates.
//!
//! Stage 1 linearizes the first condition with `G = P₁𝐋` and `M = U𝐊`, with all
//! decision matrices block-diagonal per observer. Stage 2 fixes the gains and
//! searches `(P₂, P₃, N₁..N₆)`. Every stage is posed as a margin maximization,
//! so the solver always runs on a strictly feasible problem and "infeasible"
//! means the optimal margin is below the tolerance.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{AffineExpr, MatExpr};
use crate::linalg::{asymmetry, block_diag, kron, max_eigenvalue, min_eigenvalue};
use crate::lure::LureSystem;
use crate::observer::{restrict_rows, ObserverBank, ObserverGains, SubsetFamily};
use crate::sdp::{
    facial_reduction, solve, strict_obstruction, substitute_expr, Sdp, SdpIterate, SdpSettings, SdpStatus,
    StructuralObstruction, VarMap,
};

/// Data of one observer: the plant matrices and its sensor restriction.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBlock {
    pub c_s: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrices {
    pub n_c: usize,
    pub n_observers: usize,
    pub family: SubsetFamily,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub zeta: DVector<f64>,
    pub big_a: DMatrix<f64>,
    pub big_b: DMatrix<f64>,
    pub big_c: DMatrix<f64>,
    pub e_bar: DMatrix<f64>,
    /// `Σ|S| × N_𝒪N_c`, one `C_S` block per observer.
    pub c_star: DMatrix<f64>,
    pub local: Vec<LocalBlock>,
}

impl BlockMatrices {
    pub fn dim(&self) -> usize {
        self.n_c * self.n_observers
    }

    pub fn e_bar_inv(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.e_bar.diagonal().map(|z| 1.0 / z))
    }
}

pub fn build_block_matrices(sys: &LureSystem, family: &SubsetFamily) -> Result<BlockMatrices> {
    let n_c = sys.n_states();
    if family.n_c != n_c {
        return Err(Error::Dimension(format!("subsets over {} sensors for a plant of order {n_c}", family.n_c)));
    }
    let n_obs = family.n_observers();
    let eye = DMatrix::identity(n_obs, n_obs);
    let local = family.all().map(|s| Ok(LocalBlock { c_s: restrict_rows(&sys.c, s)? })).collect::<Result<Vec<_>>>()?;
    let c_star = block_diag(&local.iter().map(|l| l.c_s.clone()).collect::<Vec<_>>());
    Ok(BlockMatrices {
        n_c,
        n_observers: n_obs,
        family: family.clone(),
        a: sys.a.clone(),
        b: sys.b.clone(),
        c: sys.c.clone(),
        zeta: sys.zeta.clone(),
        big_a: kron(&eye, &sys.a),
        big_b: kron(&eye, &sys.b),
        big_c: kron(&eye, &sys.c),
        e_bar: kron(&eye, &DMatrix::from_diagonal(&sys.zeta)),
        c_star,
        local,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainDesign {
    /// Block-diagonal `N_𝒪N_c × Σ|S|`.
    pub k: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub per_subset: Vec<ObserverGains>,
}

impl GainDesign {
    pub fn from_subset_gains(per_subset: Vec<ObserverGains>) -> Self {
        let k = block_diag(&per_subset.iter().map(|g| g.k.clone()).collect::<Vec<_>>());
        let l = block_diag(&per_subset.iter().map(|g| g.l.clone()).collect::<Vec<_>>());
        Self { k, l, per_subset }
    }

    pub fn zeros(bm: &BlockMatrices) -> Self {
        Self::from_subset_gains(bm.local.iter().map(|l| ObserverGains::zeros(bm.n_c, l.c_s.nrows())).collect())
    }

    pub fn bank(&self, family: &SubsetFamily) -> Result<ObserverBank> {
        ObserverBank::new(family.clone(), self.per_subset.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateStage1 {
    pub p1: DMatrix<f64>,
    /// Diagonal of `U`.
    pub u: DVector<f64>,
    pub nu: f64,
    pub mu_d: f64,
    pub mu_w: f64,
    /// The substituted variables `P₁𝐋` and `U𝐊` as solved.
    pub p1_l: DMatrix<f64>,
    pub u_k: DMatrix<f64>,
}

impl CertificateStage1 {
    pub fn u_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateStage2 {
    pub p2: DMatrix<f64>,
    pub p3: DMatrix<f64>,
    pub n: [DMatrix<f64>; 6],
    pub t_bar: f64,
}

/// Sign of the last diagonal block of the first condition.
///
/// As printed the block is `+U𝐄̄⁻¹`, which makes the condition unsatisfiable
/// for every positive `U`; the Schur-complement step that produces `Q₂` needs
/// `−U𝐄̄⁻¹`. Synthesis uses the corrected sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Lmi7Variant {
    Printed,
    #[default]
    Corrected,
}

/// Constant data of the first condition for one observer or for the full bank.
pub struct Lmi7Data<'a> {
    pub a: &'a DMatrix<f64>,
    pub b: &'a DMatrix<f64>,
    pub c: &'a DMatrix<f64>,
    pub c_star: &'a DMatrix<f64>,
    pub e_bar_inv: &'a DMatrix<f64>,
}

/// The 7×7-block first condition; scalars are passed as 1×1 expressions.
#[allow(clippy::too_many_arguments)]
pub fn lmi7_expr<M: MatExpr>(
    d: &Lmi7Data,
    p1: &M,
    u: &M,
    g: &M,
    m: &M,
    nu: &M,
    mu_d: &M,
    mu_w: &M,
    variant: Lmi7Variant,
) -> M {
    let n = d.a.nrows();
    let z = M::zeros(n, n);
    let bt = d.b.transpose();
    let ue = u.rmul(d.e_bar_inv);
    let mcs = m.rmul(d.c_star);
    let b11 = p1.rmul(d.a).add(&p1.rmul(d.a).t()).add(&M::scalar_identity(nu, n));
    let b21 = g.rmul(d.c_star).t();
    let b31 = p1.lmul(&bt).add(&u.rmul(d.c));
    let b41 = p1.lmul(&bt).add(&mcs);
    let b77 = match variant {
        Lmi7Variant::Printed => ue.clone(),
        Lmi7Variant::Corrected => ue.neg(),
    };
    let lower = alloc::vec![
        alloc::vec![b11],
        alloc::vec![b21, z.clone()],
        alloc::vec![b31, z.clone(), ue.scale(-2.0)],
        alloc::vec![b41, z.clone(), z.clone(), ue.scale(-2.0)],
        alloc::vec![p1.clone(), z.clone(), z.clone(), z.clone(), M::scalar_identity(mu_d, n).neg()],
        alloc::vec![p1.clone(), z.clone(), z.clone(), z.clone(), z.clone(), M::scalar_identity(mu_w, n).neg()],
        alloc::vec![z.clone(), mcs.neg(), z.clone(), z.clone(), z.clone(), z.clone(), b77],
    ];
    M::symmetric_from_lower(&lower)
}

/// Layout of the `P₂` block row of the second and third conditions.
///
/// The printed row is `[𝐀ᵀP₂, 𝐂*ᵀ𝐋ᵀP₂, 𝐁ᵀP₂, 𝐁ᵀP₂, P₂, P₂]`, the blockwise
/// transpose of `P₂M(𝐋)`. Only `P₂M(𝐋)` reproduces `R₁ + T̄R₂` and
/// `R₁ + T̄R₃` by a Schur complement; the two agree when `P₂` commutes with
/// `𝐀`, `𝐁` and `𝐋𝐂*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Lmi89Variant {
    Printed,
    #[default]
    SchurConsistent,
}

/// Constant data of the second and third conditions.
pub struct Lmi89Data<'a> {
    pub a: &'a DMatrix<f64>,
    pub b: &'a DMatrix<f64>,
    /// `𝐋𝐂*`
    pub lc: &'a DMatrix<f64>,
    pub t_bar: f64,
    pub variant: Lmi89Variant,
}

fn p2_row<M: MatExpr>(d: &Lmi89Data, p2: &M) -> Vec<M> {
    let (a, lc, b) = match d.variant {
        Lmi89Variant::Printed => (p2.lmul(&d.a.transpose()), p2.lmul(&d.lc.transpose()), p2.lmul(&d.b.transpose())),
        Lmi89Variant::SchurConsistent => (p2.rmul(d.a), p2.rmul(d.lc), p2.rmul(d.b)),
    };
    alloc::vec![a, lc, b.clone(), b, p2.clone(), p2.clone()]
}

pub fn lmi8_expr<M: MatExpr>(d: &Lmi89Data, p2: &M, p3: &M, nm: &[M; 6]) -> M {
    let n = d.a.nrows();
    let z = M::zeros(n, n);
    let [n1, n2, n3, n4, n5, n6] = nm;
    let p2t = p2.scale(-1.0 / d.t_bar);
    let mut lower = alloc::vec![
        alloc::vec![p3.neg().add(n1).add(&n1.t())],
        alloc::vec![p3.add(n2).sub(&n1.t()), p3.neg().sub(n2).sub(&n2.t())],
    ];
    for (k, nk) in [n3, n4, n5, n6].into_iter().enumerate() {
        let mut row = alloc::vec![nk.clone(), nk.neg()];
        row.extend((0..=k).map(|_| z.clone()));
        lower.push(row);
    }
    let mut row7 = p2_row(d, p2);
    row7.push(p2t.clone());
    lower.push(row7);
    lower.push(alloc::vec![n1.t(), n2.t(), n3.t(), n4.t(), n5.t(), n6.t(), z.clone(), p2t]);
    M::symmetric_from_lower(&lower)
}

pub fn lmi9_expr<M: MatExpr>(d: &Lmi89Data, p2: &M, p3: &M, nm: &[M; 6]) -> M {
    let n = d.a.nrows();
    let z = M::zeros(n, n);
    let t = d.t_bar;
    let bt = d.b.transpose();
    let [n1, n2, n3, n4, n5, n6] = nm;
    let p3a = p3.rmul(d.a);
    let p3lc = p3.rmul(d.lc);
    let a11 = p3a.add(&p3a.t()).scale(t).sub(p3).add(n1).add(&n1.t());
    let a21 = p3.lmul(&d.lc.transpose()).scale(t).sub(&p3a.scale(t)).add(p3).add(n2).sub(&n1.t());
    let a22 = p3lc.add(&p3lc.t()).scale(-t).sub(p3).sub(n2).sub(&n2.t());
    let tb3 = p3.lmul(&bt).scale(t);
    let tp3 = p3.scale(t);
    let mut lower = alloc::vec![alloc::vec![a11], alloc::vec![a21, a22]];
    for (k, (base, nk)) in [(&tb3, n3), (&tb3, n4), (&tp3, n5), (&tp3, n6)].into_iter().enumerate() {
        let first = base.add(nk);
        let mut row = alloc::vec![first.clone(), first.neg()];
        row.extend((0..=k).map(|_| z.clone()));
        lower.push(row);
    }
    let mut row7 = p2_row(d, p2);
    row7.push(p2.scale(-1.0 / t));
    lower.push(row7);
    M::symmetric_from_lower(&lower)
}

fn check_symmetric(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let asym = asymmetry(&m);
    if asym > 1e-12 * m.norm().max(1.0) {
        return Err(Error::Numerical(format!("assembled matrix is not symmetric (‖Q − Qᵀ‖ = {asym:e})")));
    }
    Ok(m)
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

#[allow(clippy::too_many_arguments)]
pub fn assemble_lmi7(
    bm: &BlockMatrices,
    p1: &DMatrix<f64>,
    u: &DMatrix<f64>,
    g_l: &DMatrix<f64>,
    m_k: &DMatrix<f64>,
    nu: f64,
    mu_d: f64,
    mu_w: f64,
    variant: Lmi7Variant,
) -> Result<DMatrix<f64>> {
    let n = bm.dim();
    let s = bm.c_star.nrows();
    if p1.shape() != (n, n) || u.shape() != (n, n) || g_l.shape() != (n, s) || m_k.shape() != (n, s) {
        return Err(Error::Dimension(format!(
            "P1 {:?}, U {:?}, G {:?}, M {:?} for lifted order {n} and {s} measurements",
            p1.shape(),
            u.shape(),
            g_l.shape(),
            m_k.shape()
        )));
    }
    let e_inv = bm.e_bar_inv();
    let d = Lmi7Data { a: &bm.big_a, b: &bm.big_b, c: &bm.big_c, c_star: &bm.c_star, e_bar_inv: &e_inv };
    check_symmetric(lmi7_expr(&d, p1, u, g_l, m_k, &scalar(nu), &scalar(mu_d), &scalar(mu_w), variant))
}

fn check_stage2_inputs(
    bm: &BlockMatrices,
    p2: &DMatrix<f64>,
    p3: &DMatrix<f64>,
    nm: &[DMatrix<f64>; 6],
    t_bar: f64,
) -> Result<()> {
    if !(t_bar > 0.0) {
        return Err(Error::Parameter(format!("T̄ = {t_bar} must be positive")));
    }
    let n = bm.dim();
    if p2.shape() != (n, n) || p3.shape() != (n, n) || nm.iter().any(|m| m.shape() != (n, n)) {
        return Err(Error::Dimension(format!("stage-2 certificate matrices must be {n}×{n}")));
    }
    Ok(())
}

pub fn assemble_lmi8(
    bm: &BlockMatrices,
    p2: &DMatrix<f64>,
    p3: &DMatrix<f64>,
    nm: &[DMatrix<f64>; 6],
    l: &DMatrix<f64>,
    t_bar: f64,
    variant: Lmi89Variant,
) -> Result<DMatrix<f64>> {
    check_stage2_inputs(bm, p2, p3, nm, t_bar)?;
    let lc = l * &bm.c_star;
    let d = Lmi89Data { a: &bm.big_a, b: &bm.big_b, lc: &lc, t_bar, variant };
    check_symmetric(lmi8_expr(&d, p2, p3, nm))
}

pub fn assemble_lmi9(
    bm: &BlockMatrices,
    p2: &DMatrix<f64>,
    p3: &DMatrix<f64>,
    nm: &[DMatrix<f64>; 6],
    l: &DMatrix<f64>,
    t_bar: f64,
    variant: Lmi89Variant,
) -> Result<DMatrix<f64>> {
    check_stage2_inputs(bm, p2, p3, nm, t_bar)?;
    let lc = l * &bm.c_star;
    let d = Lmi89Data { a: &bm.big_a, b: &bm.big_b, lc: &lc, t_bar, variant };
    check_symmetric(lmi9_expr(&d, p2, p3, nm))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisSettings {
    /// Strict inequalities are read as `⪯ −eps_feas·I`.
    pub eps_feas: f64,
    /// Slack granted to non-strict inequalities.
    pub eps_nonstrict: f64,
    /// Upper bound on `U`, `ν`, `μ_d`, `μ_w` (after scaling) in stage 1.
    pub scalar_cap: f64,
    /// Upper bound on `P₂`, `P₃` in stage 2 (they are normalized to `⪰ I`).
    pub p_cap: f64,
    /// Scale `C` by its largest entry before solving stage 1.
    pub scale_c: bool,
    pub lmi89: Lmi89Variant,
    pub sdp: SdpSettings,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self {
            eps_feas: 1e-6,
            eps_nonstrict: 1e-9,
            scalar_cap: 100.0,
            p_cap: 100.0,
            scale_c: true,
            lmi89: Lmi89Variant::default(),
            sdp: SdpSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityReport {
    pub stage: u8,
    pub summary: String,
    /// Best margin reached (negative or below tolerance).
    pub margin: Option<f64>,
    pub solver_status: Option<SdpStatus>,
    pub obstruction: Option<StructuralObstruction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Outcome {
    pub certificate: CertificateStage1,
    pub gains: GainDesign,
    /// Optimal `t` of the reduced margin problem.
    pub margin: f64,
    pub feasible: bool,
    /// `λ_max` of the first condition after removing the identically zero rows,
    /// recomputed from the recovered certificate.
    pub reduced_lambda_max: f64,
    /// `λ_max` of the full first condition.
    pub full_lambda_max: f64,
    /// Rows per observer removed because their diagonal is identically zero.
    pub removed_rows: usize,
    pub solver_status: SdpStatus,
    pub iterations: usize,
    pub solver_trace: Vec<SdpIterate>,
    pub notes: Vec<String>,
}

struct VarCounter(usize);

impl VarCounter {
    fn take(&mut self, k: usize) -> usize {
        let first = self.0;
        self.0 += k;
        first
    }
}

fn const_expr(m: DMatrix<f64>) -> AffineExpr {
    AffineExpr::constant(m)
}

fn eye(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// `t·I` for the margin variable `t` at index `v`.
fn margin_identity(v: usize, n: usize) -> AffineExpr {
    AffineExpr::scalar_identity(&AffineExpr::scalar_var(v), n)
}

fn substitute_all(exprs: &[AffineExpr], map: &VarMap) -> Vec<AffineExpr> {
    exprs.iter().map(|e| substitute_expr(e, map)).collect()
}

/// Variable indices of one observer in the stage-1 problem.
struct Stage1Vars {
    p1: AffineExpr,
    u: AffineExpr,
    g: AffineExpr,
    m: AffineExpr,
}

pub fn design_stage1(bm: &BlockMatrices, settings: &SynthesisSettings) -> Result<Stage1Outcome> {
    let n_c = bm.n_c;
    let scale = match bm.c.amax() {
        m if settings.scale_c && m > 0.0 => m,
        _ => 1.0,
    };
    let c_tilde = &bm.c / scale;
    let e_inv_tilde = DMatrix::from_diagonal(&bm.zeta.map(|z| 1.0 / (scale * z)));

    let mut vc = VarCounter(0);
    let nu_v = vc.take(1);
    let mud_v = vc.take(1);
    let muw_v = vc.take(1);
    let sym_len = n_c * (n_c + 1) / 2;
    let mut vars = Vec::with_capacity(bm.n_observers);
    let mut lmis = Vec::with_capacity(bm.n_observers);
    let cs_tilde: Vec<DMatrix<f64>> = bm.local.iter().map(|l| &l.c_s / scale).collect();
    for cs in &cs_tilde {
        let m_s = cs.nrows();
        let v = Stage1Vars {
            p1: AffineExpr::symmetric_var(n_c, vc.take(sym_len)),
            u: AffineExpr::diagonal_var(n_c, vc.take(n_c)),
            g: AffineExpr::full_var(n_c, m_s, vc.take(n_c * m_s)),
            m: AffineExpr::full_var(n_c, m_s, vc.take(n_c * m_s)),
        };
        let d = Lmi7Data { a: &bm.a, b: &bm.b, c: &c_tilde, c_star: cs, e_bar_inv: &e_inv_tilde };
        let f = lmi7_expr(
            &d,
            &v.p1,
            &v.u,
            &v.g,
            &v.m,
            &AffineExpr::scalar_var(nu_v),
            &AffineExpr::scalar_var(mud_v),
            &AffineExpr::scalar_var(muw_v),
            Lmi7Variant::Corrected,
        );
        lmis.push(f.neg());
        vars.push(v);
    }
    let n_vars = vc.0;

    let red = match facial_reduction(&lmis, n_vars) {
        Ok(r) => r,
        Err(obstruction) => {
            return Err(Error::Infeasible(Box::new(InfeasibilityReport {
                stage: 1,
                summary: format!("first condition structurally infeasible: {}", obstruction.detail),
                margin: None,
                solver_status: None,
                obstruction: Some(obstruction),
            })))
        }
    };
    let mut notes = Vec::new();
    let removed_per_observer = red.removed_rows / bm.n_observers.max(1);
    if red.removed_rows > 0 {
        notes.push(format!(
            "{removed_per_observer} rows per observer have an identically zero diagonal; \
             feasibility forces P₁𝐋𝐂* = 0 and U𝐊𝐂* = 0 on them"
        ));
    }

    // Margin problem in the reduced variables plus t.
    let n_red = red.map.n_reduced();
    let t_v = n_red;
    let mut blocks: Vec<AffineExpr> = red
        .lmis
        .iter()
        .filter(|f| f.constant.nrows() > 0)
        .map(|f| f.sub(&margin_identity(t_v, f.constant.nrows())))
        .collect();
    let cap = settings.scalar_cap;
    let mut bounds = Vec::new();
    for v in &vars {
        bounds.push(v.p1.clone());
        bounds.push(const_expr(eye(n_c)).sub(&v.p1));
        bounds.push(v.u.clone());
        bounds.push(const_expr(eye(n_c) * cap).sub(&v.u));
    }
    for s in [nu_v, mud_v, muw_v] {
        bounds.push(AffineExpr::scalar_var(s));
        bounds.push(const_expr(scalar(cap)).sub(&AffineExpr::scalar_var(s)));
    }
    let lower_bounded = |i: usize| i.is_multiple_of(2);
    for (i, b) in substitute_all(&bounds, &red.map).into_iter().enumerate() {
        let n = b.constant.nrows();
        blocks.push(if lower_bounded(i) { b.sub(&margin_identity(t_v, n)) } else { b });
    }
    let mut objective = DVector::zeros(n_red + 1);
    objective[t_v] = 1.0;
    let sol = solve(&Sdp::from_lmis(n_red + 1, objective, &blocks), &settings.sdp);
    let margin = sol.y[t_v];
    let y = red.map.expand(&sol.y.as_slice()[..n_red]);

    // Recover the unscaled certificate.
    let ys = y.as_slice();
    let p1_blocks: Vec<DMatrix<f64>> = vars.iter().map(|v| v.p1.eval(ys)).collect();
    let u_blocks: Vec<DMatrix<f64>> = vars.iter().map(|v| v.u.eval(ys) / scale).collect();
    let g_blocks: Vec<DMatrix<f64>> = vars.iter().map(|v| v.g.eval(ys) / scale).collect();
    let m_blocks: Vec<DMatrix<f64>> = vars.iter().map(|v| v.m.eval(ys) / scale).collect();
    let mut per_subset = Vec::with_capacity(bm.n_observers);
    for o in 0..bm.n_observers {
        let p_inv = p1_blocks[o].clone().try_inverse().ok_or_else(|| Error::Numerical("singular P₁ block".into()))?;
        let u_inv = DMatrix::from_diagonal(&u_blocks[o].diagonal().map(|u| 1.0 / u));
        per_subset.push(ObserverGains { k: u_inv * &m_blocks[o], l: p_inv * &g_blocks[o] });
    }
    let certificate = CertificateStage1 {
        p1: block_diag(&p1_blocks),
        u: DVector::from_iterator(
            bm.dim(),
            u_blocks.iter().flat_map(|u| u.diagonal().iter().copied().collect::<Vec<_>>()),
        ),
        nu: ys[nu_v],
        mu_d: ys[mud_v],
        mu_w: ys[muw_v],
        p1_l: block_diag(&g_blocks),
        u_k: block_diag(&m_blocks),
    };
    let gains = GainDesign::from_subset_gains(per_subset);

    let full = assemble_lmi7(
        bm,
        &certificate.p1,
        &certificate.u_matrix(),
        &certificate.p1_l,
        &certificate.u_k,
        certificate.nu,
        certificate.mu_d,
        certificate.mu_w,
        Lmi7Variant::Corrected,
    )?;
    let full_lambda_max = max_eigenvalue(&full);
    let reduced_lambda_max = reduced_lambda_max(bm, &full, &red.kept_rows);
    let feasible = margin >= settings.eps_feas && matches!(sol.status, SdpStatus::Optimal | SdpStatus::Stalled);
    Ok(Stage1Outcome {
        certificate,
        gains,
        margin,
        feasible,
        reduced_lambda_max,
        full_lambda_max,
        removed_rows: removed_per_observer,
        solver_status: sol.status,
        iterations: sol.iterations,
        solver_trace: sol.trace.clone(),
        notes,
    })
}

/// `λ_max` of the full first condition restricted to the rows kept by facial
/// reduction; per-observer row `k` of block row `b` maps to `b·N + o·N_c + k`.
fn reduced_lambda_max(bm: &BlockMatrices, full: &DMatrix<f64>, kept: &[Vec<usize>]) -> f64 {
    let n_c = bm.n_c;
    let n = bm.dim();
    let rows: Vec<usize> = kept
        .iter()
        .enumerate()
        .flat_map(|(o, ks)| ks.iter().map(move |&k| (k / n_c) * n + o * n_c + k % n_c))
        .collect();
    let sub = full.select_rows(rows.iter()).select_columns(rows.iter());
    max_eigenvalue(&sub)
}

/// Stage 1 as a fallible call: the certificate and gains when the margin
/// clears `eps_feas`.
pub fn solve_stage1(bm: &BlockMatrices, settings: &SynthesisSettings) -> Result<(CertificateStage1, GainDesign)> {
    let out = design_stage1(bm, settings)?;
    if !out.feasible {
        return Err(Error::Infeasible(Box::new(InfeasibilityReport {
            stage: 1,
            summary: format!("first condition: best margin {:.3e} below {:.1e}", out.margin, settings.eps_feas),
            margin: Some(out.margin),
            solver_status: Some(out.solver_status),
            obstruction: None,
        })));
    }
    Ok((out.certificate, out.gains))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Outcome {
    /// Least-violation certificate; satisfies the conditions only if `feasible`.
    pub certificate: CertificateStage2,
    /// Smallest per-observer margin `t` with both conditions `⪯ −t·I`.
    pub margin: f64,
    pub feasible: bool,
    pub lmi8_lambda_max: f64,
    pub lmi9_lambda_max: f64,
    pub obstruction: Option<StructuralObstruction>,
    pub solver_status: Vec<SdpStatus>,
}

pub fn design_stage2(
    bm: &BlockMatrices,
    gains: &GainDesign,
    t_bar: f64,
    settings: &SynthesisSettings,
) -> Result<Stage2Outcome> {
    if !(t_bar > 0.0) {
        return Err(Error::Parameter(format!("T̄ = {t_bar} must be positive")));
    }
    if gains.per_subset.len() != bm.n_observers {
        return Err(Error::Dimension("gain count does not match the bank".into()));
    }
    let n_c = bm.n_c;
    let sym_len = n_c * (n_c + 1) / 2;
    let mut p2_blocks = Vec::new();
    let mut p3_blocks = Vec::new();
    let mut n_blocks: [Vec<DMatrix<f64>>; 6] = Default::default();
    let mut margin = f64::INFINITY;
    let mut obstruction = None;
    let mut statuses = Vec::new();
    for (o, local) in bm.local.iter().enumerate() {
        let lc = &gains.per_subset[o].l * &local.c_s;
        let mut vc = VarCounter(0);
        let p2 = AffineExpr::symmetric_var(n_c, vc.take(sym_len));
        let p3 = AffineExpr::symmetric_var(n_c, vc.take(sym_len));
        let nm: [AffineExpr; 6] = core::array::from_fn(|_| AffineExpr::full_var(n_c, n_c, vc.take(n_c * n_c)));
        let t_v = vc.take(1);
        let d = Lmi89Data { a: &bm.a, b: &bm.b, lc: &lc, t_bar, variant: settings.lmi89 };
        let f8 = lmi8_expr(&d, &p2, &p3, &nm).neg();
        let f9 = lmi9_expr(&d, &p2, &p3, &nm).neg();
        if obstruction.is_none() {
            obstruction = strict_obstruction(&[f8.clone(), f9.clone()]).map(|mut ob| {
                ob.detail = format!("observer {o}: {}", describe_stage2_row(ob.block, ob.row, n_c));
                ob
            });
        }
        let cap = settings.p_cap;
        let blocks = alloc::vec![
            f8.sub(&margin_identity(t_v, 8 * n_c)),
            f9.sub(&margin_identity(t_v, 7 * n_c)),
            p2.sub(&const_expr(eye(n_c))),
            p3.sub(&const_expr(eye(n_c))),
            const_expr(eye(n_c) * cap).sub(&p2),
            const_expr(eye(n_c) * cap).sub(&p3),
        ];
        let mut objective = DVector::zeros(vc.0);
        objective[t_v] = 1.0;
        let sol = solve(&Sdp::from_lmis(vc.0, objective, &blocks), &settings.sdp);
        statuses.push(sol.status);
        let ys = sol.y.as_slice();
        margin = margin.min(ys[t_v]);
        p2_blocks.push(p2.eval(ys));
        p3_blocks.push(p3.eval(ys));
        for (k, nk) in nm.iter().enumerate() {
            n_blocks[k].push(nk.eval(ys));
        }
    }
    let certificate = CertificateStage2 {
        p2: block_diag(&p2_blocks),
        p3: block_diag(&p3_blocks),
        n: core::array::from_fn(|k| block_diag(&n_blocks[k])),
        t_bar,
    };
    let lmi8_lambda_max = max_eigenvalue(&assemble_lmi8(
        bm,
        &certificate.p2,
        &certificate.p3,
        &certificate.n,
        &gains.l,
        t_bar,
        settings.lmi89,
    )?);
    let lmi9_lambda_max = max_eigenvalue(&assemble_lmi9(
        bm,
        &certificate.p2,
        &certificate.p3,
        &certificate.n,
        &gains.l,
        t_bar,
        settings.lmi89,
    )?);
    let feasible = obstruction.is_none() && margin >= settings.eps_feas;
    Ok(Stage2Outcome {
        certificate,
        margin,
        feasible,
        lmi8_lambda_max,
        lmi9_lambda_max,
        obstruction,
        solver_status: statuses,
    })
}

fn describe_stage2_row(block: usize, row: usize, n_c: usize) -> String {
    let which = if block == 0 { "second" } else { "third" };
    format!(
        "{which} condition, block row {} (entry {}) has an identically zero diagonal while coupled to P₂ \
         through block row 7, so it cannot be negative definite",
        row / n_c + 1,
        row % n_c + 1
    )
}

pub fn solve_stage2(
    bm: &BlockMatrices,
    gains: &GainDesign,
    t_bar: f64,
    settings: &SynthesisSettings,
) -> Result<CertificateStage2> {
    let out = design_stage2(bm, gains, t_bar, settings)?;
    if !out.feasible {
        let summary = match &out.obstruction {
            Some(ob) => format!("T̄ = {t_bar}: {}", ob.detail),
            None => format!("T̄ = {t_bar}: best margin {:.3e}; try a smaller T̄", out.margin),
        };
        return Err(Error::Infeasible(Box::new(InfeasibilityReport {
            stage: 2,
            summary,
            margin: Some(out.margin),
            solver_status: out.solver_status.first().copied(),
            obstruction: out.obstruction,
        })));
    }
    Ok(out.certificate)
}

/// Largest `T̄` in `[lo, hi]` (to bisection accuracy) for which stage 2 is feasible.
pub fn max_feasible_t_bar(
    bm: &BlockMatrices,
    gains: &GainDesign,
    lo: f64,
    hi: f64,
    iterations: usize,
    settings: &SynthesisSettings,
) -> Result<Option<f64>> {
    let feasible = |t: f64| design_stage2(bm, gains, t, settings).map(|o| o.feasible);
    if feasible(hi)? {
        return Ok(Some(hi));
    }
    if !feasible(lo)? {
        return Ok(None);
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..iterations {
        let mid = 0.5 * (a + b);
        if feasible(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(Some(a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub lmi7_lambda_max: f64,
    pub lmi7_printed_lambda_max: f64,
    pub lmi8_lambda_max: f64,
    pub lmi9_lambda_max: f64,
    pub p1_lambda_min: f64,
    pub p2_lambda_min: f64,
    pub p3_lambda_min: f64,
    pub u_min: f64,
    pub scalars_positive: bool,
    /// Relative mismatch between `P₁𝐋`, `U𝐊` recomputed from the gains and the
    /// substituted variables stored in the certificate.
    pub gain_mismatch: f64,
    pub failures: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn verify_certificates(
    bm: &BlockMatrices,
    gains: &GainDesign,
    c1: &CertificateStage1,
    c2: &CertificateStage2,
    settings: &SynthesisSettings,
) -> Result<VerificationReport> {
    let u = c1.u_matrix();
    let g = &c1.p1 * &gains.l;
    let m = &u * &gains.k;
    let lmi7 = |variant| assemble_lmi7(bm, &c1.p1, &u, &g, &m, c1.nu, c1.mu_d, c1.mu_w, variant);
    let lmi7_lambda_max = max_eigenvalue(&lmi7(Lmi7Variant::Corrected)?);
    let lmi7_printed_lambda_max = max_eigenvalue(&lmi7(Lmi7Variant::Printed)?);
    let lmi8_lambda_max =
        max_eigenvalue(&assemble_lmi8(bm, &c2.p2, &c2.p3, &c2.n, &gains.l, c2.t_bar, settings.lmi89)?);
    let lmi9_lambda_max =
        max_eigenvalue(&assemble_lmi9(bm, &c2.p2, &c2.p3, &c2.n, &gains.l, c2.t_bar, settings.lmi89)?);
    let p1_lambda_min = min_eigenvalue(&c1.p1);
    let p2_lambda_min = min_eigenvalue(&c2.p2);
    let p3_lambda_min = min_eigenvalue(&c2.p3);
    let u_min = c1.u.min();
    let scalars_positive = c1.nu > 0.0 && c1.mu_d > 0.0 && c1.mu_w > 0.0;
    let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        if a.shape() != b.shape() {
            return f64::INFINITY;
        }
        (a - b).norm() / (1.0 + b.norm())
    };
    let gain_mismatch = rel(&g, &c1.p1_l).max(rel(&m, &c1.u_k));

    let mut failures = Vec::new();
    let strict = -0.5 * settings.eps_feas;
    let scale7 = c1.p1.amax().max(u.amax()).max(1.0);
    if lmi7_lambda_max > settings.eps_nonstrict * scale7 {
        failures.push(format!("first condition λ_max = {lmi7_lambda_max:.3e} > 0"));
    }
    if lmi8_lambda_max > strict {
        failures.push(format!("second condition λ_max = {lmi8_lambda_max:.3e} not below {strict:.1e}"));
    }
    if lmi9_lambda_max > strict {
        failures.push(format!("third condition λ_max = {lmi9_lambda_max:.3e} not below {strict:.1e}"));
    }
    for (name, v) in [("P₁", p1_lambda_min), ("P₂", p2_lambda_min), ("P₃", p3_lambda_min), ("U", u_min)] {
        if !(v > 0.0) {
            failures.push(format!("{name} not positive definite (min eigenvalue {v:.3e})"));
        }
    }
    if !scalars_positive {
        failures.push("ν, μ_d, μ_w must be positive".into());
    }
    Ok(VerificationReport {
        lmi7_lambda_max,
        lmi7_printed_lambda_max,
        lmi8_lambda_max,
        lmi9_lambda_max,
        p1_lambda_min,
        p2_lambda_min,
        p3_lambda_min,
        u_min,
        scalars_positive,
        gain_mismatch,
        failures,
    })
}
