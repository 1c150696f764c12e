use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry accepted before a matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Splits a symmetric matrix into its positive and negative semidefinite parts
/// by the sign of its eigenvalues, so that `A = A⁺ + A⁻`.
pub fn split_indefinite(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !a.is_square() {
        return Err(Error::NotSymmetric(f64::INFINITY));
    }
    let scale = a.amax().max(1.0);
    let asym = (a - a.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let n = a.nrows();
    if a.iter().all(|&x| x == 0.0) {
        return Ok((DMatrix::zeros(n, n), DMatrix::zeros(n, n)));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let part = |keep: fn(f64) -> bool| {
        let mut out = DMatrix::zeros(n, n);
        for (k, &l) in eig.eigenvalues.iter().enumerate() {
            if keep(l) {
                let v = eig.eigenvectors.column(k);
                out += v * v.transpose() * l;
            }
        }
        (&out + out.transpose()) * 0.5
    };
    Ok((part(|l| l > 0.0), part(|l| l < 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_case() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        let (p, m) = split_indefinite(&a).unwrap();
        assert!((p - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-15);
        assert!((m - DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0])).amax() < 1e-15);
    }

    #[test]
    fn psd_has_no_negative_part() {
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.3, 0.7, 1.1]);
        let a = &b * b.transpose();
        let (_, m) = split_indefinite(&a).unwrap();
        assert!(m.amax() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(split_indefinite(&a), Err(Error::NotSymmetric(_))));
        assert!(split_indefinite(&DMatrix::zeros(2, 3)).is_err());
    }
}
