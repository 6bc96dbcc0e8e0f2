//! Matrices that are affine in a vector of scalar decision variables.
//!
//! The LMI assembly code is written once against [`MatExpr`] and instantiated
//! both with plain numeric matrices (verification) and with [`AffineExpr`]
//! (constraint generation for the solver).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::linalg::block_grid;

pub trait MatExpr: Clone + Sized {
    fn zeros(rows: usize, cols: usize) -> Self;
    fn constant(m: DMatrix<f64>) -> Self;
    fn shape(&self) -> (usize, usize);
    fn add(&self, other: &Self) -> Self;
    fn scale(&self, s: f64) -> Self;
    /// `m · self`
    fn lmul(&self, m: &DMatrix<f64>) -> Self;
    /// `self · m`
    fn rmul(&self, m: &DMatrix<f64>) -> Self;
    fn t(&self) -> Self;
    fn grid(blocks: &[Vec<Self>]) -> Self;
    /// `s · I_n` for a 1×1 expression `s`.
    fn scalar_identity(s: &Self, n: usize) -> Self;

    fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// Symmetric matrix from its lower block triangle; `lower[i]` holds blocks
    /// `(i, 0..=i)` and the strictly upper blocks are mirrored.
    fn symmetric_from_lower(lower: &[Vec<Self>]) -> Self {
        let k = lower.len();
        let grid: Vec<Vec<Self>> = (0..k)
            .map(|i| (0..k).map(|j| if j <= i { lower[i][j].clone() } else { lower[j][i].t() }).collect())
            .collect();
        Self::grid(&grid)
    }
}

impl MatExpr for DMatrix<f64> {
    fn zeros(rows: usize, cols: usize) -> Self {
        DMatrix::zeros(rows, cols)
    }
    fn constant(m: DMatrix<f64>) -> Self {
        m
    }
    fn shape(&self) -> (usize, usize) {
        self.shape()
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn lmul(&self, m: &DMatrix<f64>) -> Self {
        m * self
    }
    fn rmul(&self, m: &DMatrix<f64>) -> Self {
        self * m
    }
    fn t(&self) -> Self {
        self.transpose()
    }
    fn grid(blocks: &[Vec<Self>]) -> Self {
        block_grid(blocks)
    }
    fn scalar_identity(s: &Self, n: usize) -> Self {
        DMatrix::identity(n, n) * s[(0, 0)]
    }
}

/// `constant + Σ_v y_v · coeffs[v]`
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub constant: DMatrix<f64>,
    pub coeffs: BTreeMap<usize, DMatrix<f64>>,
}

impl AffineExpr {
    /// Symmetric `n×n` matrix variable using `n(n+1)/2` scalars starting at
    /// `first`, ordered row by row over the upper triangle.
    pub fn symmetric_var(n: usize, first: usize) -> Self {
        let mut coeffs = BTreeMap::new();
        let mut v = first;
        for r in 0..n {
            for c in r..n {
                let mut m = DMatrix::zeros(n, n);
                m[(r, c)] = 1.0;
                m[(c, r)] = 1.0;
                coeffs.insert(v, m);
                v += 1;
            }
        }
        Self { constant: DMatrix::zeros(n, n), coeffs }
    }

    pub fn diagonal_var(n: usize, first: usize) -> Self {
        let coeffs = (0..n)
            .map(|i| {
                let mut m = DMatrix::zeros(n, n);
                m[(i, i)] = 1.0;
                (first + i, m)
            })
            .collect();
        Self { constant: DMatrix::zeros(n, n), coeffs }
    }

    /// Unstructured matrix variable, row-major.
    pub fn full_var(rows: usize, cols: usize, first: usize) -> Self {
        let coeffs = (0..rows * cols)
            .map(|k| {
                let mut m = DMatrix::zeros(rows, cols);
                m[(k / cols, k % cols)] = 1.0;
                (first + k, m)
            })
            .collect();
        Self { constant: DMatrix::zeros(rows, cols), coeffs }
    }

    pub fn scalar_var(v: usize) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(v, DMatrix::from_element(1, 1, 1.0));
        Self { constant: DMatrix::zeros(1, 1), coeffs }
    }

    pub fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (v, c) in &self.coeffs {
            out += c * y[*v];
        }
        out
    }

    fn map_terms(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self { constant: f(&self.constant), coeffs: self.coeffs.iter().map(|(v, c)| (*v, f(c))).collect() }
    }

    /// Drops coefficient matrices that are identically zero.
    pub fn prune(&mut self) {
        self.coeffs.retain(|_, c| c.iter().any(|x| *x != 0.0));
    }
}

impl MatExpr for AffineExpr {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self { constant: DMatrix::zeros(rows, cols), coeffs: BTreeMap::new() }
    }
    fn constant(m: DMatrix<f64>) -> Self {
        Self { constant: m, coeffs: BTreeMap::new() }
    }
    fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }
    fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.constant += &other.constant;
        for (v, c) in &other.coeffs {
            match out.coeffs.get_mut(v) {
                Some(m) => *m += c,
                None => {
                    out.coeffs.insert(*v, c.clone());
                }
            }
        }
        out
    }
    fn scale(&self, s: f64) -> Self {
        self.map_terms(|m| m * s)
    }
    fn lmul(&self, m: &DMatrix<f64>) -> Self {
        self.map_terms(|c| m * c)
    }
    fn rmul(&self, m: &DMatrix<f64>) -> Self {
        self.map_terms(|c| c * m)
    }
    fn t(&self) -> Self {
        self.map_terms(|m| m.transpose())
    }
    fn grid(blocks: &[Vec<Self>]) -> Self {
        let constant =
            block_grid(&blocks.iter().map(|row| row.iter().map(|b| b.constant.clone()).collect()).collect::<Vec<_>>());
        let mut vars: Vec<usize> =
            blocks.iter().flat_map(|row| row.iter().flat_map(|b| b.coeffs.keys().copied())).collect();
        vars.sort_unstable();
        vars.dedup();
        let coeffs = vars
            .into_iter()
            .map(|v| {
                let g: Vec<Vec<DMatrix<f64>>> = blocks
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|b| {
                                b.coeffs
                                    .get(&v)
                                    .cloned()
                                    .unwrap_or_else(|| DMatrix::zeros(b.constant.nrows(), b.constant.ncols()))
                            })
                            .collect()
                    })
                    .collect();
                (v, block_grid(&g))
            })
            .collect();
        Self { constant, coeffs }
    }
    fn scalar_identity(s: &Self, n: usize) -> Self {
        s.map_terms(|m| DMatrix::identity(n, n) * m[(0, 0)])
    }
}
