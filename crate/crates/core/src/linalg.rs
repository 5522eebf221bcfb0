//! Dense symmetric linear-algebra helpers shared by the estimation and attack modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold (to the largest eigenvalue) below which an eigenvalue counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in descending order.
///
/// Eigenvectors are the columns of `vectors`. Each eigenvector is normalized so that its first
/// component that is not negligible is positive, which makes signs reproducible.
#[derive(Clone, Debug)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SortedEigen {
    pub fn new(matrix: &DMatrix<f64>) -> Self {
        let sym = symmetrize(matrix);
        let eig = sym.symmetric_eigen();
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            eig.eigenvalues[j]
                .partial_cmp(&eig.eigenvalues[i])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(src).into_owned();
            fix_sign(&mut col);
            vectors.set_column(dst, &col);
        }
        SortedEigen { values, vectors }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of eigenvalues above `RANK_TOLERANCE` times the largest one.
    pub fn rank(&self) -> usize {
        numerical_rank(self.values.as_slice(), RANK_TOLERANCE)
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.vectors.column(i).into_owned()
    }

    /// Rebuilds `V f(Λ) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = DVector::from_iterator(self.len(), self.values.iter().map(|&v| f(v)));
        let mut left = self.vectors.clone();
        for (j, s) in scaled.iter().enumerate() {
            left.column_mut(j).scale_mut(*s);
        }
        symmetrize(&(left * self.vectors.transpose()))
    }
}

fn fix_sign(v: &mut DVector<f64>) {
    let scale = v.amax();
    if scale == 0.0 {
        return;
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

pub fn numerical_rank(descending: &[f64], rel_tol: f64) -> usize {
    match descending.first() {
        Some(&top) if top > 0.0 => descending.iter().filter(|&&v| v > rel_tol * top).count(),
        _ => 0,
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    SortedEigen::new(m).map(|v| v.max(0.0).sqrt())
}

/// Inverse principal square root of a symmetric positive definite matrix.
pub fn spd_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SortedEigen::new(m);
    if eig.values.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(eig.map(|v| 1.0 / v.sqrt()))
}

/// `log |m|` for symmetric positive definite `m`, via Cholesky.
pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = symmetrize(m)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `log |det m|` for a general square matrix via LU.
pub fn log_abs_det(m: &DMatrix<f64>) -> f64 {
    let lu = m.clone().lu();
    lu.u().diagonal().iter().map(|d| d.abs().ln()).sum()
}

/// Checks that `m` is symmetric positive semidefinite up to a relative tolerance.
pub fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            context: "square matrix",
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    if m.is_empty() {
        return Ok(());
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-9 * scale {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: f64::NAN,
        });
    }
    let eig = SortedEigen::new(m);
    let min = eig.values[eig.len() - 1];
    let top = eig.values[0].abs().max(f64::MIN_POSITIVE);
    if min < -1e-10 * top {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
        });
    }
    Ok(())
}

/// Factor `F` with `F Fᵀ = m` for symmetric PSD `m`, keeping only the numerically nonzero
/// part of the spectrum. The factor has `m.nrows()` rows and `rank(m)` columns.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_psd(m)?;
    let eig = SortedEigen::new(m);
    let rank = eig.rank();
    let mut f = DMatrix::zeros(m.nrows(), rank);
    for j in 0..rank {
        let col = eig.vectors.column(j) * eig.values[j].sqrt();
        f.set_column(j, &col);
    }
    Ok(f)
}

/// Condition number of a symmetric positive definite matrix from its spectrum.
pub fn condition_number(eig: &SortedEigen) -> f64 {
    if eig.is_empty() {
        return 1.0;
    }
    eig.values[0] / eig.values[eig.len() - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigen_sorted_descending_with_positive_leading_entry() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let eig = SortedEigen::new(&m);
        assert!(eig.values[0] >= eig.values[1] && eig.values[1] >= eig.values[2]);
        for j in 0..3 {
            let v = eig.vector(j);
            let first = v.iter().find(|x| x.abs() > 1e-12).unwrap();
            assert!(*first > 0.0);
            assert_relative_eq!((&m * &v - &v * eig.values[j]).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = psd_sqrt(&m);
        assert_relative_eq!(&r * &r, m, epsilon = 1e-12);
        let ri = spd_inv_sqrt(&m).unwrap();
        assert_relative_eq!(&ri * &m * &ri, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn log_det_matches_lu() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        assert_relative_eq!(log_det_spd(&m).unwrap(), 11f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(log_abs_det(&m), 11f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn factor_of_singular_matrix() {
        let v = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let m = &v * v.transpose();
        let f = psd_factor(&m).unwrap();
        assert_eq!(f.ncols(), 1);
        assert_relative_eq!(&f * f.transpose(), m, epsilon = 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            check_psd(&m),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }
}
