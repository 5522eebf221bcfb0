//! Likelihood-ratio detection of data-injection attacks.
//!
//! Two detectors are provided:
//!
//! * for a known deterministic attack `a`, the ratio `L(y, a) = f_{N(0,Σ_YY)}(y) / f_{N(a,Σ_YY)}(y)`,
//!   with the operator deciding "no attack" when `L > τ`;
//! * for a Gaussian attack with covariance `Σ_AA`, the ratio
//!   `L(y) = f_{N(0,Σ_YY+Σ_AA)}(y) / f_{N(0,Σ_YY)}(y)`, with "attack" decided when `L ≥ τ`.
//!
//! Ties `L = τ` go to the attack hypothesis in both cases.
//!
//! Under the optimal stealth attack the detection probability reduces to the upper tail of a
//! weighted sum of independent χ²₁ variables, see [`WeightedChiSquare`].

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimation::MeasurementModel;
use crate::linalg::{check_psd, symmetrize};
use crate::mc::{self, McEstimate};
use crate::prior::GaussianSampler;
use crate::special::erfc;

/// Outcome of a binary hypothesis test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    /// No attack.
    H0,
    /// Attack present.
    H1,
}

/// Value of a likelihood ratio and the resulting decision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrtOutcome {
    pub log_ratio: f64,
    pub decision: Decision,
}

impl LrtOutcome {
    pub fn ratio(&self) -> f64 {
        self.log_ratio.exp()
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("tau", tau, "tau > 0"))
    }
}

/// Detector for a known deterministic attack, with `Σ_YY⁻¹ a` precomputed.
#[derive(Clone, Debug)]
pub struct DeterministicLrt {
    weighted: DVector<f64>,
    half_quadratic: f64,
    log_tau: f64,
}

impl DeterministicLrt {
    pub fn new(model: &MeasurementModel, a: &DVector<f64>, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        let weighted = model.solve(a)?;
        Ok(DeterministicLrt {
            half_quadratic: 0.5 * a.dot(&weighted),
            weighted,
            log_tau: tau.ln(),
        })
    }

    /// `log L(y, a) = ½ aᵀΣ_YY⁻¹a − aᵀΣ_YY⁻¹y`.
    pub fn log_ratio(&self, y: &DVector<f64>) -> f64 {
        self.half_quadratic - self.weighted.dot(y)
    }

    pub fn test(&self, y: &DVector<f64>) -> LrtOutcome {
        let log_ratio = self.log_ratio(y);
        let decision = if log_ratio > self.log_tau {
            Decision::H0
        } else {
            Decision::H1
        };
        LrtOutcome {
            log_ratio,
            decision,
        }
    }
}

/// Deterministic-attack likelihood ratio test on a single measurement.
pub fn lrt_deterministic(
    model: &MeasurementModel,
    y: &DVector<f64>,
    a: &DVector<f64>,
    tau: f64,
) -> Result<LrtOutcome> {
    model.check_len(y, "measurement vector")?;
    Ok(DeterministicLrt::new(model, a, tau)?.test(y))
}

/// Non-detection probability as a function of `x = aᵀΣ_YY⁻¹a`:
/// `½ erfc((x/2 + log τ) / √(2x))`.
pub fn prob_not_detected_quadratic(x: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if !(x > 0.0) {
        return Err(Error::NullAttack);
    }
    Ok(0.5 * erfc((0.5 * x + tau.ln()) / (2.0 * x).sqrt()))
}

/// Probability that the deterministic attack `a` is not detected.
///
/// The null attack is rejected with [`Error::NullAttack`]: the expression is singular there.
pub fn prob_not_detected(model: &MeasurementModel, a: &DVector<f64>, tau: f64) -> Result<f64> {
    prob_not_detected_quadratic(model.mahalanobis(a)?, tau)
}

/// Samples `Y = H X + Z` under the model's prior and noise.
#[derive(Clone, Debug)]
pub struct MeasurementSampler {
    h: DMatrix<f64>,
    states: GaussianSampler,
    noise_std: f64,
}

impl MeasurementSampler {
    pub fn new(model: &MeasurementModel) -> Result<Self> {
        Ok(MeasurementSampler {
            h: model.jacobian().clone(),
            states: GaussianSampler::new(model.sigma_xx())?,
            noise_std: model.noise_variance().sqrt(),
        })
    }

    pub fn sample(&self, rng: &mut mc::Rng) -> DVector<f64> {
        let x = self.states.sample(rng);
        let mut y = &self.h * x;
        for v in y.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += self.noise_std * z;
        }
        y
    }
}

/// Empirical non-detection frequency of `a`: draws `Y = H X + Z + a` and counts `L > τ`.
pub fn simulate_not_detected(
    model: &MeasurementModel,
    a: &DVector<f64>,
    tau: f64,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    let lrt = DeterministicLrt::new(model, a, tau)?;
    let sampler = MeasurementSampler::new(model)?;
    Ok(mc::estimate_probability(trials, seed, |rng| {
        let y = sampler.sample(rng) + a;
        lrt.test(&y).decision == Decision::H0
    }))
}

/// Detector for a zero-mean Gaussian attack with covariance `Σ_AA`.
#[derive(Clone, Debug)]
pub struct StealthLrt {
    yy: Cholesky<f64, Dyn>,
    ya: Cholesky<f64, Dyn>,
    half_log_det_ratio: f64,
    log_tau: f64,
}

impl StealthLrt {
    pub fn new(model: &MeasurementModel, sigma_aa: &DMatrix<f64>, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        if sigma_aa.nrows() != model.m() {
            return Err(Error::DimensionMismatch {
                context: "attack covariance",
                expected: model.m(),
                actual: sigma_aa.nrows(),
            });
        }
        check_psd(sigma_aa)?;
        let yy = model
            .sigma_yy()
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        let ya = symmetrize(&(model.sigma_yy() + sigma_aa))
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        let log_det = |c: &Cholesky<f64, Dyn>| {
            2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
        };
        Ok(StealthLrt {
            half_log_det_ratio: 0.5 * (log_det(&ya) - log_det(&yy)),
            yy,
            ya,
            log_tau: tau.ln(),
        })
    }

    /// `log f_{N(0,Σ_YY+Σ_AA)}(y) − log f_{N(0,Σ_YY)}(y)`.
    pub fn log_ratio(&self, y: &DVector<f64>) -> f64 {
        let qyy = y.dot(&self.yy.solve(y));
        let qya = y.dot(&self.ya.solve(y));
        0.5 * (qyy - qya) - self.half_log_det_ratio
    }

    pub fn test(&self, y: &DVector<f64>) -> LrtOutcome {
        let log_ratio = self.log_ratio(y);
        let decision = if log_ratio >= self.log_tau {
            Decision::H1
        } else {
            Decision::H0
        };
        LrtOutcome {
            log_ratio,
            decision,
        }
    }
}

/// Gaussian-attack likelihood ratio test on a single measurement.
pub fn lrt_stealth(
    model: &MeasurementModel,
    sigma_aa: &DMatrix<f64>,
    y: &DVector<f64>,
    tau: f64,
) -> Result<LrtOutcome> {
    model.check_len(y, "measurement vector")?;
    Ok(StealthLrt::new(model, sigma_aa, tau)?.test(y))
}

/// Empirical detection frequency of a Gaussian attack: draws `Y_A = H X + Z + A` with
/// `A ~ N(0, Σ_AA)` and counts `L ≥ τ`.
pub fn simulate_stealth_detection(
    model: &MeasurementModel,
    sigma_aa: &DMatrix<f64>,
    tau: f64,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    let lrt = StealthLrt::new(model, sigma_aa, tau)?;
    let sampler = MeasurementSampler::new(model)?;
    let attack = GaussianSampler::new(sigma_aa)?;
    Ok(mc::estimate_probability(trials, seed, |rng| {
        let y = sampler.sample(rng) + attack.sample(rng);
        lrt.test(&y).decision == Decision::H1
    }))
}

/// Weights of the quadratic form governing detection of the optimal stealth attack.
///
/// With `μ_1 ≥ … ≥ μ_p > 0` the nonzero eigenvalues of `H Σ_XX Hᵀ`, the weights are
/// `w_i = μ_i / (μ_i + σ²)`: the signal eigenvalue times the eigenvalue of `Σ_YY⁻¹` on the same
/// eigenvector. They do not depend on `λ` and lie in `(0, 1)`.
pub fn stealth_weights(model: &MeasurementModel, lambda: f64) -> Result<WeightedChiSquare> {
    if !(lambda >= 1.0) || !lambda.is_finite() {
        return Err(Error::domain("lambda", lambda, "lambda >= 1"));
    }
    let sigma2 = model.noise_variance();
    let eig = model.signal_eigen();
    let weights = eig
        .values
        .iter()
        .take(eig.rank())
        .map(|&mu| mu / (mu + sigma2))
        .collect();
    WeightedChiSquare::new(weights)
}

/// Detection threshold on `Σ w_i U_i²` for the optimal attack with weight `λ`:
/// `λ (2 log τ + Σ log(1 + w_i/λ))`.
pub fn stealth_threshold(weights: &WeightedChiSquare, lambda: f64, tau: f64) -> f64 {
    let log_det: f64 = weights.weights().iter().map(|w| (w / lambda).ln_1p()).sum();
    lambda * (2.0 * tau.ln() + log_det)
}

/// How to evaluate a weighted-χ² tail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailMethod {
    /// Characteristic-function inversion by quadrature.
    CfInversion,
    /// Monte Carlo with the given number of draws and seed.
    MonteCarlo { trials: usize, seed: u64 },
}

/// A probability with its uncertainty: a quadrature error bound or a Monte Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailProbability {
    pub value: f64,
    pub error: f64,
}

/// Probability that the LRT detects the optimal stealth attack with weight `λ`.
pub fn prob_detection_stealth(
    model: &MeasurementModel,
    lambda: f64,
    tau: f64,
    method: TailMethod,
) -> Result<TailProbability> {
    check_tau(tau)?;
    let weights = stealth_weights(model, lambda)?;
    let threshold = stealth_threshold(&weights, lambda, tau);
    weights.tail(threshold, method)
}

/// Requested absolute accuracy of [`WeightedChiSquare::tail_cf`].
pub const CF_TOLERANCE: f64 = 1e-6;
const MAX_PANELS: usize = 20_000_000;

/// Distribution of `Q = Σ w_i U_i²` with `U_i` i.i.d. standard normal and positive weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedChiSquare {
    weights: Vec<f64>,
}

impl WeightedChiSquare {
    /// Weights must be positive and finite; they are stored in descending order.
    pub fn new(mut weights: Vec<f64>) -> Result<Self> {
        if let Some(&w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::domain("weight", w, "w > 0"));
        }
        weights.sort_by(|a, b| b.total_cmp(a));
        Ok(WeightedChiSquare { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of terms `p`.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `tr(Δ²) = Σ w_i²`.
    pub fn sum_squares(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// `‖Δ‖_∞ = max w_i`.
    pub fn max_weight(&self) -> f64 {
        self.weights.first().copied().unwrap_or(0.0)
    }

    pub fn tail(&self, x: f64, method: TailMethod) -> Result<TailProbability> {
        match method {
            TailMethod::CfInversion => self.tail_cf(x),
            TailMethod::MonteCarlo { trials, seed } => {
                let e = self.tail_mc(x, trials, seed);
                Ok(TailProbability {
                    value: e.mean,
                    error: e.std_error,
                })
            }
        }
    }

    /// `P[Q ≥ x]` by Monte Carlo.
    pub fn tail_mc(&self, x: f64, trials: usize, seed: u64) -> McEstimate {
        mc::estimate_probability(trials, seed, |rng| {
            let q: f64 = self
                .weights
                .iter()
                .map(|w| {
                    let u: f64 = StandardNormal.sample(rng);
                    w * u * u
                })
                .sum();
            q >= x
        })
    }

    /// `P[Q ≥ x]` by Imhof's inversion formula
    /// `½ + (1/π) ∫₀^∞ sin θ(u) / (u ρ(u)) du` with
    /// `θ(u) = ½ Σ atan(w_i u) − ½ x u` and `ρ(u) = Π (1 + w_i² u²)^{1/4}`.
    ///
    /// The integral is truncated where a bound on the remainder drops below a fraction of
    /// [`CF_TOLERANCE`], and integrated with Gauss–Kronrod panels spanning at most half an
    /// oscillation. The returned error is the sum of the truncation bound and the Kronrod
    /// error estimates.
    pub fn tail_cf(&self, x: f64) -> Result<TailProbability> {
        if self.weights.is_empty() {
            let value = if x <= 0.0 { 1.0 } else { 0.0 };
            return Ok(TailProbability { value, error: 0.0 });
        }
        if x <= 0.0 {
            return Ok(TailProbability {
                value: 1.0,
                error: 0.0,
            });
        }
        let scale = self.max_weight();
        let w: Vec<f64> = self.weights.iter().map(|v| v / scale).collect();
        let x = x / scale;
        let half_sum: f64 = 0.5 * w.iter().sum::<f64>();

        let theta = |u: f64| 0.5 * w.iter().map(|wi| (wi * u).atan()).sum::<f64>() - 0.5 * x * u;
        let dtheta = |u: f64| 0.5 * w.iter().map(|wi| wi / (1.0 + wi * wi * u * u)).sum::<f64>() - 0.5 * x;
        let log_rho = |u: f64| 0.25 * w.iter().map(|wi| (wi * wi * u * u).ln_1p()).sum::<f64>();
        let integrand = |u: f64| {
            if u == 0.0 {
                half_sum - 0.5 * x
            } else {
                theta(u).sin() / (u * log_rho(u).exp())
            }
        };

        // Remainder bound past U: the non-oscillatory bound ∫ 1/(u ρ(u)) and, once θ' < 0,
        // the second-mean-value bound 2 / (U ρ(U) |θ'(U)|).
        let k = 0.5 * w.len() as f64;
        let log_prod_sqrt: f64 = 0.5 * w.iter().map(|wi| wi.ln()).sum::<f64>();
        let remainder = |u: f64| {
            let crude = (-(k * u.ln()) - log_prod_sqrt).exp() / k;
            let d = dtheta(u);
            let osc = if d < 0.0 {
                2.0 / (u * log_rho(u).exp() * -d)
            } else {
                f64::INFINITY
            };
            crude.min(osc) / PI
        };
        let target = 0.01 * CF_TOLERANCE;
        let max_rate = 0.5 * x + half_sum;
        let mut upper = PI / max_rate;
        while remainder(upper) > target && upper < 1e12 {
            upper *= 2.0;
        }
        let truncation = remainder(upper);
        // Panels span at most half an oscillation and at most half their distance from the
        // origin, beyond which the amplitude is smooth.
        let rate = |u: f64| 0.5 * x + 0.5 * w.iter().map(|wi| wi / (1.0 + wi * wi * u * u)).sum::<f64>();
        let mut total = 0.0;
        let mut quad_err = 0.0;
        let mut lo = 0.0;
        let mut panels = 0;
        while lo < upper {
            let width = (PI / rate(lo)).min(0.5 * lo.max(0.5));
            let hi = (lo + width).min(upper);
            let (v, e) = gauss_kronrod(&integrand, lo, hi);
            total += v;
            quad_err += e;
            lo = hi;
            panels += 1;
            if panels > MAX_PANELS {
                return Err(Error::NonConvergence {
                    what: "weighted chi-square inversion",
                    achieved: remainder(lo),
                    requested: CF_TOLERANCE,
                });
            }
        }
        let error = truncation + quad_err / PI;
        let value = (0.5 + total / PI).clamp(0.0, 1.0);
        if error > CF_TOLERANCE {
            return Err(Error::NonConvergence {
                what: "weighted chi-square inversion",
                achieved: error,
                requested: CF_TOLERANCE,
            });
        }
        Ok(TailProbability { value, error })
    }
}

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
// Gauss weights for the nodes with odd index above (and the centre).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate of `∫_a^b f` with the embedded 7-point Gauss error estimate.
fn gauss_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let pair = f(c - h * KRONROD_NODES[i]) + f(c + h * KRONROD_NODES[i]);
        kronrod += KRONROD_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}
