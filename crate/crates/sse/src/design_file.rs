//! JSON design file: system fingerprint, gains and both certificates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sse_core::lmi::{CertificateStage1, CertificateStage2, GainDesign, Stage1Outcome, Stage2Outcome};
use sse_core::lure::LureSystem;
use sse_core::observer::{ObserverGains, SubsetFamily};

use crate::error::CliError;

pub const FORMAT: &str = "sse-design/1";

pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &Rows) -> Result<DMatrix<f64>, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Mismatch("ragged matrix in design file".into()));
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemData {
    pub a: Rows,
    pub b: Rows,
    pub c: Rows,
    pub zeta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainPair {
    /// 1-based sensor indices.
    pub subset: Vec<usize>,
    pub k: Rows,
    pub l: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Data {
    pub p1: Rows,
    pub u: Vec<f64>,
    pub nu: f64,
    pub mu_d: f64,
    pub mu_w: f64,
    pub p1_l: Rows,
    pub u_k: Rows,
    pub margin: f64,
    pub feasible: bool,
    pub reduced_lambda_max: f64,
    pub full_lambda_max: f64,
    pub removed_rows: usize,
    pub solver_status: String,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Data {
    pub p2: Rows,
    pub p3: Rows,
    pub n: Vec<Rows>,
    pub t_bar_s: f64,
    pub margin: f64,
    pub feasible: bool,
    pub lmi8_lambda_max: f64,
    pub lmi9_lambda_max: f64,
    pub obstruction: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub format: String,
    pub n_c: usize,
    pub n_a: usize,
    pub t_bar_s: f64,
    pub system: SystemData,
    pub gains: Vec<GainPair>,
    pub stage1: Stage1Data,
    pub stage2: Option<Stage2Data>,
}

impl DesignFile {
    pub fn new(
        sys: &LureSystem,
        family: &SubsetFamily,
        t_bar: f64,
        s1: &Stage1Outcome,
        s2: Option<&Stage2Outcome>,
    ) -> Self {
        let c1 = &s1.certificate;
        let stage1 = Stage1Data {
            p1: to_rows(&c1.p1),
            u: c1.u.iter().copied().collect(),
            nu: c1.nu,
            mu_d: c1.mu_d,
            mu_w: c1.mu_w,
            p1_l: to_rows(&c1.p1_l),
            u_k: to_rows(&c1.u_k),
            margin: s1.margin,
            feasible: s1.feasible,
            reduced_lambda_max: s1.reduced_lambda_max,
            full_lambda_max: s1.full_lambda_max,
            removed_rows: s1.removed_rows,
            solver_status: format!("{:?}", s1.solver_status),
            iterations: s1.iterations,
        };
        let stage2 = s2.map(|s2| Stage2Data {
            p2: to_rows(&s2.certificate.p2),
            p3: to_rows(&s2.certificate.p3),
            n: s2.certificate.n.iter().map(to_rows).collect(),
            t_bar_s: s2.certificate.t_bar,
            margin: s2.margin,
            feasible: s2.feasible,
            lmi8_lambda_max: s2.lmi8_lambda_max,
            lmi9_lambda_max: s2.lmi9_lambda_max,
            obstruction: s2.obstruction.as_ref().map(|o| o.detail.clone()),
        });
        Self {
            format: FORMAT.into(),
            n_c: family.n_c,
            n_a: family.n_a,
            t_bar_s: t_bar,
            system: SystemData {
                a: to_rows(&sys.a),
                b: to_rows(&sys.b),
                c: to_rows(&sys.c),
                zeta: sys.zeta.iter().copied().collect(),
            },
            gains: family
                .all()
                .zip(&s1.gains.per_subset)
                .map(|(s, g)| GainPair {
                    subset: s.indices.iter().map(|i| i + 1).collect(),
                    k: to_rows(&g.k),
                    l: to_rows(&g.l),
                })
                .collect(),
            stage1,
            stage2,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let d: DesignFile = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("design file: {e}")))?;
        if d.format != FORMAT {
            return Err(CliError::Usage(format!("design file format `{}` (expected `{FORMAT}`)", d.format)));
        }
        Ok(d)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("design data is plain numbers and strings")
    }

    /// Fails with a mismatch unless the file was built for this system and bank.
    pub fn check_matches(&self, sys: &LureSystem, family: &SubsetFamily, t_bar: f64) -> Result<(), CliError> {
        if self.n_c != family.n_c || self.n_a != family.n_a {
            return Err(CliError::Mismatch(format!(
                "design is for (N_c, N_a) = ({}, {}), config asks for ({}, {})",
                self.n_c, self.n_a, family.n_c, family.n_a
            )));
        }
        if self.t_bar_s != t_bar {
            return Err(CliError::Mismatch(format!("design uses T̄ = {} s, config {} s", self.t_bar_s, t_bar)));
        }
        let close = |rows: &Rows, m: &DMatrix<f64>| {
            from_rows(rows).is_ok_and(|d| d.shape() == m.shape() && (&d - m).amax() <= 1e-12 * (1.0 + m.amax()))
        };
        if !close(&self.system.a, &sys.a) || !close(&self.system.b, &sys.b) || !close(&self.system.c, &sys.c) {
            return Err(CliError::Mismatch("system matrices differ from the configured grid".into()));
        }
        if self.system.zeta != sys.zeta.iter().copied().collect::<Vec<_>>() {
            return Err(CliError::Mismatch("sector bounds differ from the configured grid".into()));
        }
        let expected: Vec<Vec<usize>> = family.all().map(|s| s.indices.iter().map(|i| i + 1).collect()).collect();
        let got: Vec<Vec<usize>> = self.gains.iter().map(|g| g.subset.clone()).collect();
        if expected != got {
            return Err(CliError::Mismatch("observer subsets differ from the configured bank".into()));
        }
        Ok(())
    }

    pub fn gains(&self) -> Result<GainDesign, CliError> {
        let per = self
            .gains
            .iter()
            .map(|g| Ok(ObserverGains { k: from_rows(&g.k)?, l: from_rows(&g.l)? }))
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(GainDesign::from_subset_gains(per))
    }

    pub fn stage1_certificate(&self) -> Result<CertificateStage1, CliError> {
        let s = &self.stage1;
        Ok(CertificateStage1 {
            p1: from_rows(&s.p1)?,
            u: DVector::from_vec(s.u.clone()),
            nu: s.nu,
            mu_d: s.mu_d,
            mu_w: s.mu_w,
            p1_l: from_rows(&s.p1_l)?,
            u_k: from_rows(&s.u_k)?,
        })
    }

    pub fn stage2_certificate(&self) -> Result<Option<CertificateStage2>, CliError> {
        let Some(s) = &self.stage2 else { return Ok(None) };
        if s.n.len() != 6 {
            return Err(CliError::Mismatch(format!("{} slack matrices in design file, expected 6", s.n.len())));
        }
        let n: Vec<DMatrix<f64>> = s.n.iter().map(from_rows).collect::<Result<_, _>>()?;
        let n: [DMatrix<f64>; 6] = n.try_into().expect("length checked above");
        Ok(Some(CertificateStage2 { p2: from_rows(&s.p2)?, p3: from_rows(&s.p3)?, n, t_bar: s.t_bar_s }))
    }
}
