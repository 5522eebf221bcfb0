//! Linear MMSE estimation under the Gaussian model `Y = H X + Z`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::grid::{build_jacobian, GridCase};
use crate::linalg::{condition_number, symmetrize, SortedEigen};
use crate::prior::{NoiseModel, StatePrior};

/// Condition number of `Σ_YY` above which a warning is logged.
pub const CONDITION_WARNING: f64 = 1e12;

/// Jacobian, prior and noise together with the derived second-order quantities.
///
/// Immutable after construction; every cached matrix is consistent with the inputs.
#[derive(Clone, Debug)]
pub struct MeasurementModel {
    h: DMatrix<f64>,
    sigma_xx: DMatrix<f64>,
    sigma2: f64,
    signal: DMatrix<f64>,
    sigma_yy: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    sigma_yy_inv: DMatrix<f64>,
    mmse: DMatrix<f64>,
    signal_eigen: SortedEigen,
    yy_eigen: SortedEigen,
}

impl MeasurementModel {
    pub fn new(h: DMatrix<f64>, prior: &StatePrior, noise: NoiseModel) -> Result<Self> {
        let sigma_xx = prior.covariance().clone();
        if h.ncols() != sigma_xx.nrows() {
            return Err(Error::DimensionMismatch {
                context: "Jacobian columns vs prior dimension",
                expected: sigma_xx.nrows(),
                actual: h.ncols(),
            });
        }
        let sigma2 = noise.variance();
        let m = h.nrows();
        let signal = symmetrize(&(&h * &sigma_xx * h.transpose()));
        let sigma_yy = &signal + DMatrix::identity(m, m) * sigma2;
        let chol = sigma_yy
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        let sigma_yy_inv = symmetrize(&chol.inverse());
        // M = Σ_XX Hᵀ Σ_YY⁻¹ = (Σ_YY⁻¹ H Σ_XX)ᵀ
        let mmse = chol.solve(&(&h * &sigma_xx)).transpose();
        let signal_eigen = SortedEigen::new(&signal);
        let yy_eigen = SortedEigen::new(&sigma_yy);
        let cond = condition_number(&yy_eigen);
        if cond > CONDITION_WARNING {
            log::warn!("Sigma_YY is ill-conditioned (condition number {cond:.3e})");
        }
        Ok(MeasurementModel {
            h,
            sigma_xx,
            sigma2,
            signal,
            sigma_yy,
            chol,
            sigma_yy_inv,
            mmse,
            signal_eigen,
            yy_eigen,
        })
    }

    /// Builds the model of a grid case with a Toeplitz prior and noise set by SNR.
    pub fn from_case(case: &GridCase, rho: f64, snr_db: f64) -> Result<Self> {
        let h = build_jacobian(case).matrix;
        let prior = StatePrior::toeplitz(h.ncols(), rho)?;
        let noise = NoiseModel::from_snr(&h, &prior, snr_db)?;
        Self::new(h, &prior, noise)
    }

    /// Number of measurements.
    pub fn m(&self) -> usize {
        self.h.nrows()
    }

    /// Number of state variables.
    pub fn n(&self) -> usize {
        self.h.ncols()
    }

    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn sigma_xx(&self) -> &DMatrix<f64> {
        &self.sigma_xx
    }

    pub fn noise_variance(&self) -> f64 {
        self.sigma2
    }

    /// `H Σ_XX Hᵀ`.
    pub fn signal_covariance(&self) -> &DMatrix<f64> {
        &self.signal
    }

    /// Sorted spectrum of `H Σ_XX Hᵀ`.
    pub fn signal_eigen(&self) -> &SortedEigen {
        &self.signal_eigen
    }

    /// Numerical rank of `H Σ_XX Hᵀ`.
    pub fn signal_rank(&self) -> usize {
        self.signal_eigen.rank()
    }

    /// `Σ_YY = H Σ_XX Hᵀ + σ² I`.
    pub fn sigma_yy(&self) -> &DMatrix<f64> {
        &self.sigma_yy
    }

    pub fn sigma_yy_inv(&self) -> &DMatrix<f64> {
        &self.sigma_yy_inv
    }

    /// Sorted spectrum of `Σ_YY`.
    pub fn sigma_yy_eigen(&self) -> &SortedEigen {
        &self.yy_eigen
    }

    pub fn sigma_yy_condition(&self) -> f64 {
        condition_number(&self.yy_eigen)
    }

    /// `log |Σ_YY|`.
    pub fn log_det_sigma_yy(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// MMSE gain `M = Σ_XX Hᵀ Σ_YY⁻¹`.
    pub fn mmse_matrix(&self) -> &DMatrix<f64> {
        &self.mmse
    }

    /// `Σ_YY⁻¹ v` by Cholesky solve.
    pub fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v, "measurement vector")?;
        Ok(self.chol.solve(v))
    }

    /// `vᵀ Σ_YY⁻¹ v`.
    pub fn mahalanobis(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(v.dot(&self.solve(v)?))
    }

    /// State estimate `M y`.
    pub fn estimate(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(y, "measurement vector")?;
        Ok(&self.mmse * y)
    }

    /// Bayesian injection vector `c = M a`: the shift an additive attack induces on the estimate.
    pub fn injection_vector(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(a, "attack vector")?;
        Ok(&self.mmse * a)
    }

    /// Excess distortion `aᵀ Σ_YY⁻¹ H Σ_XX² Hᵀ Σ_YY⁻¹ a = ‖M a‖²`.
    pub fn excess_distortion(&self, a: &DVector<f64>) -> Result<f64> {
        let w = self.solve(a)?;
        let v = &self.sigma_xx * (self.h.transpose() * w);
        Ok(v.norm_squared())
    }

    /// Distortion form `Q = Mᵀ M`, so that the excess distortion is `aᵀ Q a`.
    pub fn distortion_matrix(&self) -> DMatrix<f64> {
        symmetrize(&(self.mmse.transpose() * &self.mmse))
    }

    pub(crate) fn check_len(&self, v: &DVector<f64>, context: &'static str) -> Result<()> {
        if v.len() != self.m() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.m(),
                actual: v.len(),
            });
        }
        Ok(())
    }
}
