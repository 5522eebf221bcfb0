//! State statistics: the exponentially correlated prior, the SNR convention, Gaussian sampling
//! and sample covariances.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{check_psd, psd_factor, SortedEigen};
use crate::mc;

/// Zero-mean Gaussian prior on the state angles.
#[derive(Clone, Debug)]
pub struct StatePrior {
    rho: Option<f64>,
    sigma_xx: DMatrix<f64>,
}

impl StatePrior {
    /// Toeplitz covariance with entries `rho^|i-j|`.
    pub fn toeplitz(n: usize, rho: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("n", 0.0, "n >= 1"));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::domain("rho", rho, "0 <= rho < 1"));
        }
        let sigma_xx = DMatrix::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32));
        Ok(StatePrior {
            rho: Some(rho),
            sigma_xx,
        })
    }

    /// Prior with an arbitrary positive definite covariance.
    pub fn from_covariance(sigma_xx: DMatrix<f64>) -> Result<Self> {
        check_psd(&sigma_xx)?;
        if sigma_xx.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(StatePrior {
            rho: None,
            sigma_xx,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma_xx.nrows()
    }

    /// Decay parameter, when the prior was built by [`StatePrior::toeplitz`].
    pub fn rho(&self) -> Option<f64> {
        self.rho
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.sigma_xx
    }
}

/// Additive white measurement noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    sigma2: f64,
}

impl NoiseModel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::domain("sigma2", sigma2, "sigma2 > 0"));
        }
        Ok(NoiseModel { sigma2 })
    }

    /// Noise variance giving `snr_db = 10 log10(tr(H Σ Hᵀ) / (m σ²))`.
    pub fn from_snr(h: &DMatrix<f64>, prior: &StatePrior, snr_db: f64) -> Result<Self> {
        let trace = signal_trace(h, prior)?;
        Self::new(trace / (h.nrows() as f64 * 10f64.powf(snr_db / 10.0)))
    }

    pub fn variance(&self) -> f64 {
        self.sigma2
    }

    pub fn snr_db(&self, h: &DMatrix<f64>, prior: &StatePrior) -> Result<f64> {
        let trace = signal_trace(h, prior)?;
        Ok(10.0 * (trace / (h.nrows() as f64 * self.sigma2)).log10())
    }
}

fn signal_trace(h: &DMatrix<f64>, prior: &StatePrior) -> Result<f64> {
    if h.ncols() != prior.dim() {
        return Err(Error::DimensionMismatch {
            context: "Jacobian columns vs prior dimension",
            expected: prior.dim(),
            actual: h.ncols(),
        });
    }
    Ok((h * prior.covariance() * h.transpose()).trace())
}

/// Draws from `N(0, Σ)` for a PSD (possibly singular) `Σ` through an eigen factor.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(covariance: &DMatrix<f64>) -> Result<Self> {
        Ok(GaussianSampler {
            factor: psd_factor(covariance)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn sample(&self, rng: &mut mc::Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.factor.ncols(), |_, _| StandardNormal.sample(rng));
        &self.factor * z
    }
}

/// `count` i.i.d. draws from the prior.
pub fn sample_states(prior: &StatePrior, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let sampler = GaussianSampler::new(prior.covariance())?;
    let mut rng = mc::rng(seed);
    Ok((0..count).map(|_| sampler.sample(&mut rng)).collect())
}

/// Sample covariance `S_XX` of `k` training vectors with its sample count.
#[derive(Clone, Debug)]
pub struct SampleCovariance {
    s_xx: DMatrix<f64>,
    k: usize,
}

impl SampleCovariance {
    /// Zero-mean form `1/(k-1) Σ x xᵀ` without mean subtraction, distributed as
    /// `W_n(k, Σ)/(k-1)` for zero-mean Gaussian data.
    pub fn from_samples(samples: &[DVector<f64>]) -> Result<Self> {
        Self::accumulate(samples, None)
    }

    /// Mean-centered form `1/(k-1) Σ (x − x̄)(x − x̄)ᵀ`, distributed as `W_n(k-1, Σ)/(k-1)` for
    /// Gaussian data.
    pub fn from_samples_centered(samples: &[DVector<f64>]) -> Result<Self> {
        let mean = samples
            .iter()
            .fold(DVector::zeros(samples.first().map_or(0, |x| x.len())), |acc, x| {
                if x.len() == acc.len() { acc + x } else { acc }
            })
            / samples.len().max(1) as f64;
        Self::accumulate(samples, Some(mean))
    }

    fn accumulate(samples: &[DVector<f64>], mean: Option<DVector<f64>>) -> Result<Self> {
        let k = samples.len();
        if k < 2 {
            return Err(Error::SampleCount {
                k,
                reason: "at least two samples are required",
            });
        }
        let n = samples[0].len();
        let mut s = DMatrix::zeros(n, n);
        for x in samples {
            if x.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "sample length",
                    expected: n,
                    actual: x.len(),
                });
            }
            match &mean {
                Some(mu) => {
                    let d = x - mu;
                    s.ger(1.0, &d, &d, 1.0);
                }
                None => s.ger(1.0, x, x, 1.0),
            }
        }
        s /= (k - 1) as f64;
        Ok(SampleCovariance { s_xx: s, k })
    }

    /// Sample covariance of `k` fresh draws from `sampler`.
    pub fn draw(sampler: &GaussianSampler, k: usize, rng: &mut mc::Rng) -> Result<Self> {
        let samples: Vec<_> = (0..k).map(|_| sampler.sample(rng)).collect();
        Self::from_samples(&samples)
    }

    /// Mean-centered sample covariance of `k` fresh draws from `sampler`.
    pub fn draw_centered(sampler: &GaussianSampler, k: usize, rng: &mut mc::Rng) -> Result<Self> {
        let samples: Vec<_> = (0..k).map(|_| sampler.sample(rng)).collect();
        Self::from_samples_centered(&samples)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s_xx
    }

    pub fn sample_count(&self) -> usize {
        self.k
    }

    /// Whether the estimate is numerically nonsingular.
    pub fn is_invertible(&self) -> bool {
        let n = self.s_xx.nrows();
        n == 0 || SortedEigen::new(&self.s_xx).rank() == n
    }
}
