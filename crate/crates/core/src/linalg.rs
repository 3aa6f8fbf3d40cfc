//! Small dense linear-algebra helpers shared by the model and estimators.

use nalgebra::{DMatrix, SymmetricEigen};

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

/// Pseudoinverse of a symmetric positive semidefinite matrix. Eigenvalues
/// below `rtol · λ_max` are treated as zero. Returns the inverse and the
/// numerical rank.
pub fn pinv_psd(a: &DMatrix<f64>, rtol: f64) -> (DMatrix<f64>, usize) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cut = rtol * top.max(f64::MIN_POSITIVE);
    let mut out = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (i, &w) in eig.eigenvalues.iter().enumerate() {
        if w > cut {
            let v = eig.eigenvectors.column(i);
            out += (&v * v.transpose()) / w;
            rank += 1;
        }
    }
    (out, rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_singular_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (p, rank) = pinv_psd(&a, 1e-12);
        assert_eq!(rank, 1);
        assert!((&a * &p * &a - &a).abs().max() < 1e-12);
        assert!((p[(0, 0)] - 0.25).abs() < 1e-12);
    }
}
