//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Ascending eigen-decomposition of a real symmetric matrix.
pub struct SymEigen {
    pub eigenvalues: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let e = m.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vectors = DMatrix::from_fn(m.nrows(), m.nrows(), |i, k| e.eigenvectors[(i, idx[k])]);
    SymEigen { eigenvalues: idx.iter().map(|&k| e.eigenvalues[k]).collect(), vectors }
}

/// `m^power` for a symmetric positive-definite matrix; eigenvalues below
/// `floor` (relative to the largest) are rejected.
pub fn sym_pow(m: &DMatrix<f64>, power: f64, floor: f64) -> Result<DMatrix<f64>> {
    let e = sym_eigen(m);
    let top = e.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    if e.eigenvalues.iter().any(|&l| l <= floor * top) {
        return Err(invalid("matrix is not positive-definite"));
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        m.nrows(),
        e.eigenvalues.iter().map(|l| l.powf(power)),
    ));
    Ok(&e.vectors * d * e.vectors.transpose())
}

/// Ascending eigen-decomposition of a complex Hermitian matrix.
pub struct HermEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

pub fn herm_eigen(m: &CMatrix) -> HermEigen {
    let n = m.nrows();
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let e = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vectors = CMatrix::from_fn(n, n, |i, k| e.eigenvectors[(i, idx[k])]);
    HermEigen { values: idx.iter().map(|&k| e.eigenvalues[k]).collect(), vectors }
}

/// Spectral norm (largest singular value) of a small dense complex matrix.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.adjoint() * m;
    let e = herm_eigen(&gram);
    e.values.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return Err(invalid("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Determinant with a continuously tracked square root, for complex
/// symmetric matrices with positive-definite real part. The branch is the
/// one continuous along `Re S + i t Im S`, `t` from 0 to 1, which agrees
/// with the product of principal roots of the eigenvalues.
pub fn sqrt_det_continued(s: &CMatrix) -> Complex64 {
    let re = s.map(|z| Complex64::new(z.re, 0.0));
    let im = s.map(|z| Complex64::new(0.0, z.im));
    let mut prev = re.determinant();
    let mut arg = prev.arg();
    let steps = 256;
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        let cur = (&re + &im * Complex64::new(t, 0.0)).determinant();
        let mut delta = (cur / prev).arg();
        if delta.abs() > std::f64::consts::PI {
            delta -= delta.signum() * 2.0 * std::f64::consts::PI;
        }
        arg += delta;
        prev = cur;
    }
    Complex64::from_polar(prev.norm().sqrt(), 0.5 * arg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_pow_roundtrip() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = sym_pow(&m, 0.5, 1e-14).unwrap();
        assert!((&r * &r - &m).amax() < 1e-13);
        assert!(sym_pow(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), 0.5, 1e-14).is_err());
    }

    #[test]
    fn op_norm_of_diagonal() {
        let m = CMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(0.0, 3.0),
            Complex64::new(-1.0, 0.0),
        ]));
        assert!((op_norm(&m) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn continued_sqrt_det_matches_eigenvalue_roots() {
        // diagonal with eigenvalues in the right half plane whose product
        // wraps past the negative real axis
        let a = Complex64::from_polar(1.0, 1.2);
        let b = Complex64::from_polar(2.0, 1.3);
        let s = CMatrix::from_diagonal(&DVector::from_vec(vec![a, b]));
        let expect = a.sqrt() * b.sqrt();
        assert!((sqrt_det_continued(&s) - expect).norm() < 1e-12);
    }
}
