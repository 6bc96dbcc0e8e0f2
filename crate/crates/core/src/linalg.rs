//! Dense linear-algebra helpers shared by the synthesis and verification code.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            let mut view = out.view_mut((i * br, j * bc), (br, bc));
            view.zip_apply(b, |o, v| *o = s * v);
        }
    }
    out
}

/// Block-diagonal matrix from (possibly rectangular) blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Dense block matrix from a rectangular grid of blocks. Row heights are taken
/// from the first column and column widths from the first row.
pub fn block_grid(grid: &[Vec<DMatrix<f64>>]) -> DMatrix<f64> {
    let heights: Vec<usize> = grid.iter().map(|row| row[0].nrows()).collect();
    let widths: Vec<usize> = grid[0].iter().map(|b| b.ncols()).collect();
    let mut out = DMatrix::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r = 0;
    for (i, row) in grid.iter().enumerate() {
        let mut c = 0;
        for (j, b) in row.iter().enumerate() {
            debug_assert_eq!(b.shape(), (heights[i], widths[j]));
            out.view_mut((r, c), b.shape()).copy_from(b);
            c += widths[j];
        }
        r += heights[i];
    }
    out
}

/// `‖M − Mᵀ‖_F`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 {
        return DVector::zeros(0);
    }
    let mut ev = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    ev.as_mut_slice().sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(m);
    ev.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(m);
    ev.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Spectral norm `|M| = sqrt(λ_max(MᵀM))`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    libm::sqrt(max_eigenvalue(&(m.transpose() * m)).max(0.0))
}

/// Matrix exponential by scaling and squaring with a degree-8 Padé approximant.
///
/// nalgebra only ships `exp` behind its `std` feature, so the core carries its
/// own. After scaling `‖A‖₁ ≤ 1/2`, for which the [8/8] approximant is accurate
/// to well below double precision.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm of a non-square matrix");
    let norm1 = (0..n).map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm1 * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let a_s = a * scale;
    // [q/q] Padé coefficients c_k = (2q-k)! q! / ((2q)! k! (q-k)!)
    const Q: usize = 8;
    let mut coeffs = [0.0f64; Q + 1];
    coeffs[0] = 1.0;
    for k in 1..=Q {
        coeffs[k] = coeffs[k - 1] * ((Q - k + 1) as f64) / (((2 * Q - k + 1) * k) as f64);
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let mut num = eye.clone() * coeffs[0];
    let mut den = eye.clone() * coeffs[0];
    let mut power = eye;
    for (k, &c) in coeffs.iter().enumerate().skip(1) {
        power = &power * &a_s;
        num += &power * c;
        if k % 2 == 0 {
            den += &power * c;
        } else {
            den -= &power * c;
        }
    }
    let mut result = den.lu().solve(&num).expect("Padé denominator is nonsingular for ‖A‖ ≤ 1/2");
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kron_identity_lift_is_block_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let lifted = kron(&DMatrix::identity(3, 3), &a);
        assert_eq!(lifted, block_diag(&[a.clone(), a.clone(), a]));
    }

    #[test]
    fn expm_matches_scalar_exponential() {
        let a = DMatrix::from_element(1, 1, -3.7);
        assert_relative_eq!(expm(&a)[(0, 0)], libm::exp(-3.7), max_relative = 1e-14);
    }

    #[test]
    fn expm_of_rotation_generator() {
        let th = 2.3;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -th, th, 0.0]);
        let e = expm(&a);
        assert_relative_eq!(e[(0, 0)], libm::cos(th), epsilon = 1e-13);
        assert_relative_eq!(e[(1, 0)], libm::sin(th), epsilon = 1e-13);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![1.0, -5.0, 2.0]));
        assert_relative_eq!(spectral_norm(&m), 5.0, epsilon = 1e-12);
    }
}
