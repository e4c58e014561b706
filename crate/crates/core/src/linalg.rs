//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Smallest eigenvalue of a symmetric matrix (`+inf` for an empty matrix).
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let s = symmetrize(m);
    s.symmetric_eigenvalues().min()
}

/// Largest eigenvalue of a symmetric matrix (`-inf` for an empty matrix).
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    let s = symmetrize(m);
    s.symmetric_eigenvalues().max()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Spectral radius of a general square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Quadratic form `vᵀ M v`.
pub fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

/// Block-diagonal matrix from dense blocks.
pub fn block_diag(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let r: usize = parts.iter().map(|p| p.nrows()).sum();
    let c: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(r, c);
    let (mut r0, mut c0) = (0, 0);
    for p in parts {
        out.view_mut((r0, c0), (p.nrows(), p.ncols())).copy_from(p);
        r0 += p.nrows();
        c0 += p.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_helpers() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((min_eigenvalue(&m) - 1.0).abs() < 1e-12);
        assert!((max_eigenvalue(&m) - 3.0).abs() < 1e-12);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        assert!((spectral_radius(&rot) - 2.0).abs() < 1e-12);
        assert!((condition_number(&DMatrix::from_diagonal_element(3, 3, 4.0)) - 1.0).abs() < 1e-12);
    }
}
