//! Stealth attacks built from a sample covariance of training states.
//!
//! With `S_XX ~ W_n(k−1, Σ_XX)/(k−1)` the attack covariance is `H S_XX Hᵀ`, and its cost
//! `½(tr(Σ_YY⁻¹Σ_ÃÃ) − log|Σ_ÃÃ + σ²I| + log|Σ_YY|)` is averaged over the training data. The
//! average is estimated by Monte Carlo and bounded above with random-matrix arguments.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimation::MeasurementModel;
use crate::linalg::{log_abs_det, SortedEigen};
use crate::mc::{self, McEstimate};
use crate::prior::{GaussianSampler, SampleCovariance};
use crate::special::digamma;
use crate::stealth::StealthAttack;

/// Default number of sample-covariance draws for the ergodic cost.
pub const DEFAULT_COST_TRIALS: usize = 1_000;
/// Default number of Wishart draws for eigenvalue statistics.
pub const DEFAULT_EIGEN_TRIALS: usize = 10_000;

/// The attack `Σ_ÃÃ = H S_XX Hᵀ` built from estimated statistics.
pub fn learned_attack(model: &MeasurementModel, s_xx: &SampleCovariance) -> Result<StealthAttack> {
    let s = s_xx.matrix();
    if s.shape() != (model.n(), model.n()) {
        return Err(Error::DimensionMismatch {
            context: "sample covariance dimension",
            expected: model.n(),
            actual: s.nrows(),
        });
    }
    let h = model.jacobian();
    let sigma_aa = h * s * h.transpose();
    Ok(StealthAttack {
        lambda: 1.0,
        sigma_aa: (&sigma_aa + sigma_aa.transpose()) * 0.5,
    })
}

/// Evaluates the cost of attacks `H S Hᵀ` through `n × n` quantities.
struct CostEvaluator {
    /// `Hᵀ Σ_YY⁻¹ H`, so that `tr(Σ_YY⁻¹ H S Hᵀ) = ⟨S, Hᵀ Σ_YY⁻¹ H⟩`.
    trace_form: DMatrix<f64>,
    /// `HᵀH / σ²`, so that `log|H S Hᵀ + σ²I| = m log σ² + log|I + S HᵀH/σ²|`.
    gram: DMatrix<f64>,
    m_log_sigma2: f64,
    log_det_yy: f64,
}

impl CostEvaluator {
    fn new(model: &MeasurementModel) -> Self {
        let h = model.jacobian();
        let sigma2 = model.noise_variance();
        CostEvaluator {
            trace_form: h.transpose() * model.sigma_yy_inv() * h,
            gram: h.transpose() * h / sigma2,
            m_log_sigma2: model.m() as f64 * sigma2.ln(),
            log_det_yy: model.log_det_sigma_yy(),
        }
    }

    fn cost(&self, s: &DMatrix<f64>) -> f64 {
        let n = s.nrows();
        let trace = s.component_mul(&self.trace_form).sum();
        let log_det = self.m_log_sigma2 + log_abs_det(&(DMatrix::identity(n, n) + s * &self.gram));
        0.5 * (trace - log_det + self.log_det_yy)
    }
}

/// Cost of the attack `H S_XX Hᵀ` for one sample covariance.
pub fn ergodic_cost(model: &MeasurementModel, s_xx: &SampleCovariance) -> Result<f64> {
    learned_attack(model, s_xx)?;
    Ok(CostEvaluator::new(model).cost(s_xx.matrix()))
}

/// Cost with perfect statistics, `S_XX = Σ_XX`: `½ tr(Σ_YY⁻¹ H Σ_XX Hᵀ)`.
pub fn perfect_statistics_cost(model: &MeasurementModel) -> f64 {
    CostEvaluator::new(model).cost(model.sigma_xx())
}

/// Monte Carlo average of the cost over mean-centered sample covariances of `k` states.
pub fn ergodic_cost_mc(model: &MeasurementModel, k: usize, trials: usize, seed: u64) -> Result<McEstimate> {
    if k < 2 {
        return Err(Error::SampleCount {
            k,
            reason: "at least two training samples are required",
        });
    }
    let eval = CostEvaluator::new(model);
    let sampler = GaussianSampler::new(model.sigma_xx())?;
    Ok(mc::estimate_mean(trials, seed, |rng| {
        let s = SampleCovariance::draw_centered(&sampler, k, rng).expect("k >= 2 and consistent dimensions");
        eval.cost(s.matrix())
    }))
}

/// `((1 − √(l/(k−1)))², (1 + √(l/(k−1)))² + 1/(k−1))`: lower bound on `E[λ_min]` and upper
/// bound on `E[λ_max]` of `W_l ~ W_l(k−1, I)/(k−1)`.
pub fn wishart_extreme_bounds(l: usize, k: usize) -> Result<(f64, f64)> {
    if l == 0 || k < 2 {
        return Err(Error::domain("wishart dimensions", k as f64, "l >= 1 and k - 1 >= 1"));
    }
    let dof = (k - 1) as f64;
    let r = (l as f64 / dof).sqrt();
    Ok(((1.0 - r).powi(2), (1.0 + r).powi(2) + 1.0 / dof))
}

/// `E[log|W_p|]` for `W_p ~ W_p(k−1, I)/(k−1)` with real Gaussian entries:
/// `Σ_{i<p} ψ((k−1−i)/2) + p log 2 − p log(k−1)`.
pub fn expected_log_det_wishart(p: usize, k: usize) -> Result<f64> {
    check_dof(p, k)?;
    let dof = (k - 1) as f64;
    let sum: f64 = (0..p).map(|i| digamma((dof - i as f64) / 2.0)).sum();
    Ok(sum + p as f64 * (2f64.ln() - dof.ln()))
}

/// `Σ_{i<p} ψ(k−1−i) − p log(k−1)`, the value of `E[log|W_p|]` for circularly symmetric complex
/// Gaussian entries.
pub fn expected_log_det_wishart_complex(p: usize, k: usize) -> Result<f64> {
    check_dof(p, k)?;
    let dof = (k - 1) as f64;
    let sum: f64 = (0..p).map(|i| digamma(dof - i as f64)).sum();
    Ok(sum - p as f64 * dof.ln())
}

fn check_dof(p: usize, k: usize) -> Result<()> {
    if k < 2 || k - 1 < p {
        return Err(Error::SampleCount {
            k,
            reason: "k - 1 must be at least the signal rank p",
        });
    }
    Ok(())
}

/// `Σ log(b_i + 1/x_i)`.
pub fn logdet_objective(b: &[f64], x: &[f64]) -> f64 {
    b.iter().zip(x).map(|(b, x)| (b + 1.0 / x).ln()).sum()
}

/// Minimizes `Σ log(b_i + 1/x_i)` subject to `Σ x_i = p` and `lo ≤ x_i ≤ hi`, with the box
/// from [`wishart_extreme_bounds`]`(p, k)`.
///
/// Stationarity gives `x_i (b_i x_i + 1) = t` for a shared `t > 0`; each coordinate is clamped
/// to the box and `t` is found by bisection on the sum constraint.
pub fn waterfill_logdet(b: &[f64], p: usize, k: usize) -> Result<Vec<f64>> {
    if b.len() != p || p == 0 {
        return Err(Error::DimensionMismatch {
            context: "waterfill weights",
            expected: p,
            actual: b.len(),
        });
    }
    if let Some(&bad) = b.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::domain("b", bad, "> 0"));
    }
    let (lo, hi) = wishart_extreme_bounds(p, k)?;
    let pf = p as f64;
    if pf * lo > pf || pf * hi < pf {
        return Err(Error::InfeasibleBox(format!(
            "box [{lo}, {hi}] cannot hold coordinates summing to {p}"
        )));
    }
    let at = |t: f64| -> Vec<f64> {
        b.iter()
            .map(|&bi| (2.0 * t / (1.0 + (1.0 + 4.0 * bi * t).sqrt())).clamp(lo, hi))
            .collect()
    };
    let total = |t: f64| at(t).iter().sum::<f64>();
    let (mut t_lo, mut t_hi) = (1e-300f64, 1.0f64);
    while total(t_hi) < pf {
        t_hi *= 2.0;
        if !t_hi.is_finite() {
            return Err(Error::NonConvergence {
                what: "waterfill multiplier",
                achieved: total(f64::MAX),
                requested: pf,
            });
        }
    }
    for _ in 0..2000 {
        let mid = (t_lo * t_hi).sqrt();
        if total(mid) < pf {
            t_lo = mid;
        } else {
            t_hi = mid;
        }
        if t_hi - t_lo <= 1e-15 * t_hi {
            break;
        }
    }
    let mut x = at(0.5 * (t_lo + t_hi));
    // remove the residual of the bisection from the free coordinates
    let free: Vec<usize> = (0..p).filter(|&i| x[i] > lo && x[i] < hi).collect();
    let residual = pf - x.iter().sum::<f64>();
    if !free.is_empty() {
        for &i in &free {
            x[i] = (x[i] + residual / free.len() as f64).clamp(lo, hi);
        }
    }
    Ok(x)
}

/// Components of the upper bound on the ergodic cost.
#[derive(Clone, Debug)]
pub struct ErgodicBoundReport {
    /// Rank `p` of `H Σ_XX Hᵀ`.
    pub p: usize,
    pub k: usize,
    /// `E[log|W_p|]` for the real Wishart matrix, see [`expected_log_det_wishart`].
    pub log_det_term: f64,
    /// The complex-Gaussian counterpart `Σψ(k−1−i) − p log(k−1)`, for reference.
    pub complex_log_det_term: f64,
    /// `Σ log(λ_i/σ² + 1/x_i*)`.
    pub eigen_terms: f64,
    /// Waterfilling solution `x*`.
    pub waterfill: Vec<f64>,
    /// Upper bound in nats.
    pub bound_value: f64,
    /// Monte Carlo estimate of the ergodic cost, when requested.
    pub mc_value: Option<McEstimate>,
}

/// Nonzero eigenvalues `λ_i` of `H Σ_XX Hᵀ`, descending.
pub fn signal_eigenvalues(model: &MeasurementModel) -> Vec<f64> {
    let eig = model.signal_eigen();
    eig.values.iter().take(eig.rank()).copied().collect()
}

/// `½(tr(Σ_YY⁻¹Σ*_AA) + log|Σ_YY| − m log σ² − E[log|W_p|] − Σ log(λ_i/σ² + 1/x_i*))`
/// with `Σ*_AA = H Σ_XX Hᵀ`.
pub fn ergodic_upper_bound(model: &MeasurementModel, k: usize) -> Result<ErgodicBoundReport> {
    let lambdas = signal_eigenvalues(model);
    let p = lambdas.len();
    if p == 0 {
        return Err(Error::ZeroJacobian);
    }
    check_dof(p, k)?;
    let sigma2 = model.noise_variance();
    let b: Vec<f64> = lambdas.iter().map(|l| l / sigma2).collect();
    let waterfill = waterfill_logdet(&b, p, k)?;
    let eigen_terms = logdet_objective(&b, &waterfill);
    let log_det_term = expected_log_det_wishart(p, k)?;
    let trace = (model.sigma_yy_inv() * model.signal_covariance()).trace();
    let m_log_sigma2 = model.m() as f64 * sigma2.ln();
    let bound_value = 0.5 * (trace + model.log_det_sigma_yy() - m_log_sigma2 - log_det_term - eigen_terms);
    Ok(ErgodicBoundReport {
        p,
        k,
        log_det_term,
        complex_log_det_term: expected_log_det_wishart_complex(p, k)?,
        eigen_terms,
        waterfill,
        bound_value,
        mc_value: None,
    })
}

/// Bound together with a Monte Carlo estimate of the cost it bounds.
pub fn ergodic_bound_with_mc(model: &MeasurementModel, k: usize, trials: usize, seed: u64) -> Result<ErgodicBoundReport> {
    let mut report = ergodic_upper_bound(model, k)?;
    report.mc_value = Some(ergodic_cost_mc(model, k, trials, seed)?);
    Ok(report)
}

/// Draws `W_l = ZᵀZ/(k−1)` with `Z` a `(k−1) × l` standard Gaussian matrix.
pub fn sample_wishart(l: usize, k: usize, rng: &mut mc::Rng) -> DMatrix<f64> {
    let dof = k - 1;
    let z = DMatrix::from_fn(dof, l, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
    z.tr_mul(&z) / dof as f64
}

/// Monte Carlo statistics of the extreme eigenvalues of `W_l` and of `s_max(Z_l)`.
#[derive(Clone, Debug)]
pub struct WishartEigenStats {
    pub lambda_min: McEstimate,
    pub lambda_max: McEstimate,
    /// Sample variance of `s_max(Z_l) = √((k−1) λ_max(W_l))`.
    pub s_max_variance: f64,
    /// Standard error of `s_max_variance`.
    pub s_max_variance_se: f64,
}

pub fn wishart_eigen_stats(l: usize, k: usize, trials: usize, seed: u64) -> Result<WishartEigenStats> {
    wishart_extreme_bounds(l, k)?;
    let dof = (k - 1) as f64;
    let draws: Vec<(f64, f64)> = mc::run_chunked(
        trials,
        seed,
        Vec::with_capacity(trials),
        |rng, count| {
            (0..count)
                .map(|_| {
                    let eig = SortedEigen::new(&sample_wishart(l, k, rng));
                    (eig.values[l - 1], eig.values[0])
                })
                .collect::<Vec<_>>()
        },
        |mut acc, part| {
            acc.extend(part);
            acc
        },
    );
    let mins: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let maxs: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let s: Vec<f64> = maxs.iter().map(|v| (dof * v.max(0.0)).sqrt()).collect();
    let (variance, se) = variance_with_se(&s);
    Ok(WishartEigenStats {
        lambda_min: McEstimate::from_values(&mins),
        lambda_max: McEstimate::from_values(&maxs),
        s_max_variance: variance,
        s_max_variance_se: se,
    })
}

/// Unbiased sample variance and its large-sample standard error `√((μ₄ − s⁴)/N)`.
fn variance_with_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    (var, ((m4 - m2 * m2).max(0.0) / n).sqrt())
}

/// Monte Carlo estimate of `E[log|W_p|]`.
pub fn log_det_wishart_mc(p: usize, k: usize, trials: usize, seed: u64) -> Result<McEstimate> {
    check_dof(p, k)?;
    Ok(mc::estimate_mean(trials, seed, |rng| log_abs_det(&sample_wishart(p, k, rng))))
}

/// Monte Carlo estimate of `E[Σ log(b_i + 1/λ_i(W_p))]`, pairing `b` in the given order with
/// the eigenvalues in descending order.
pub fn jensen_term_mc(b: &[f64], k: usize, trials: usize, seed: u64) -> Result<McEstimate> {
    let p = b.len();
    check_dof(p, k)?;
    Ok(mc::estimate_mean(trials, seed, |rng| {
        let eig = SortedEigen::new(&sample_wishart(p, k, rng));
        logdet_objective(b, eig.values.as_slice())
    }))
}

/// `E[log|B + W_p⁻¹|]` by Monte Carlo, for diagonal `B = diag(b)`.
pub fn log_det_inverse_wishart_mc(b: &[f64], k: usize, trials: usize, seed: u64) -> Result<McEstimate> {
    let p = b.len();
    check_dof(p, k)?;
    let diag = DMatrix::from_diagonal(&DVector::from_column_slice(b));
    Ok(mc::estimate_mean(trials, seed, |rng| {
        let w = sample_wishart(p, k, rng);
        match w.try_inverse() {
            Some(inv) => log_abs_det(&(&diag + inv)),
            None => f64::INFINITY,
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::estimation::tests::two_bus;
    use crate::special::EULER_GAMMA;
    use crate::stealth::optimal_attack;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, Continuous};

    #[test]
    fn learned_attack_with_true_statistics() {
        let model = MeasurementModel::from_case(&cases::three_bus(), 0.5, 10.0).unwrap();
        let s = SampleCovariance::from_samples(&[DVector::zeros(2), DVector::zeros(2)]).unwrap();
        assert_eq!(learned_attack(&model, &s).unwrap().sigma_aa, DMatrix::zeros(model.m(), model.m()));
        let xs: Vec<DVector<f64>> = (0..3).map(|i| model.sigma_xx().column(i % 2).into_owned()).collect();
        let s = SampleCovariance::from_samples(&xs).unwrap();
        let att = learned_attack(&model, &s).unwrap();
        assert_eq!(att.lambda, 1.0);
        let direct = model.jacobian() * s.matrix() * model.jacobian().transpose();
        assert!((att.sigma_aa - direct).amax() < 1e-14);
        let bad = SampleCovariance::from_samples(&[DVector::zeros(3), DVector::zeros(3)]).unwrap();
        assert!(learned_attack(&model, &bad).is_err());
    }

    #[test]
    fn perfect_statistics_reproduce_optimal_attack() {
        let model = MeasurementModel::from_case(&cases::ieee14(), 0.3, 10.0).unwrap();
        let sigma_aa = optimal_attack(&model, 1.0).unwrap().sigma_aa;
        let eval = CostEvaluator::new(&model);
        let expected = 0.5 * (model.sigma_yy_inv() * &sigma_aa).trace();
        assert_relative_eq!(eval.cost(model.sigma_xx()), expected, max_relative = 1e-10);
        assert_relative_eq!(perfect_statistics_cost(&model), expected, max_relative = 1e-10);
    }

    #[test]
    fn cost_matches_dense_route() {
        let model = MeasurementModel::from_case(&cases::three_bus(), 0.2, 5.0).unwrap();
        let sampler = GaussianSampler::new(model.sigma_xx()).unwrap();
        let mut rng = mc::rng(4);
        for k in [2, 3, 10] {
            let s = SampleCovariance::draw_centered(&sampler, k, &mut rng).unwrap();
            let a = learned_attack(&model, &s).unwrap().sigma_aa;
            let m = model.m();
            let dense = 0.5
                * ((model.sigma_yy_inv() * &a).trace() - log_abs_det(&(&a + DMatrix::identity(m, m) * model.noise_variance()))
                    + model.log_det_sigma_yy());
            assert_relative_eq!(ergodic_cost(&model, &s).unwrap(), dense, max_relative = 1e-10);
        }
    }

    #[test]
    fn learned_attack_converges() {
        let model = MeasurementModel::from_case(&cases::three_bus(), 0.5, 10.0).unwrap();
        let sampler = GaussianSampler::new(model.sigma_xx()).unwrap();
        let s = SampleCovariance::draw_centered(&sampler, 100_000, &mut mc::rng(8)).unwrap();
        let att = learned_attack(&model, &s).unwrap();
        assert!((att.sigma_aa - model.signal_covariance()).amax() < 0.02);
    }

    #[test]
    fn ergodic_cost_large_k_and_reproducible() {
        let model = MeasurementModel::from_case(&cases::ieee14(), 0.3, 10.0).unwrap();
        let est = ergodic_cost_mc(&model, 10_000, 200, 1).unwrap();
        let perfect = perfect_statistics_cost(&model);
        assert!((est.mean - perfect).abs() < 0.02 * perfect);
        assert_eq!(ergodic_cost_mc(&model, 30, 100, 5).unwrap(), ergodic_cost_mc(&model, 30, 100, 5).unwrap());
        assert!(ergodic_cost_mc(&model, 1, 10, 1).is_err());
    }

    #[test]
    fn one_state_matches_quadrature() {
        // n = 1: S_XX = s with (k−1) s ~ χ²_{k−1}
        let model = two_bus(0.5);
        let eval = CostEvaluator::new(&model);
        for k in [3usize, 10, 40] {
            let dof = (k - 1) as f64;
            let chi = ChiSquared::new(dof).unwrap();
            let cost = |s: f64| eval.cost(&DMatrix::from_element(1, 1, s));
            // Simpson on the χ² variable u = (k−1) s
            let upper = dof + 40.0 * (2.0 * dof).sqrt() + 40.0;
            let steps = 200_000;
            let h = upper / steps as f64;
            let mut acc = 0.0;
            for i in 0..=steps {
                let u = i as f64 * h;
                let w = if i == 0 || i == steps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                let density = if u == 0.0 { if dof < 2.0 { 0.0 } else { chi.pdf(u) } } else { chi.pdf(u) };
                acc += w * density * cost(u / dof);
            }
            let exact = acc * h / 3.0;
            let est = ergodic_cost_mc(&model, k, 100_000, k as u64).unwrap();
            assert!(est.within(exact, 3.0), "k = {k}: {est:?} vs {exact}");
        }
    }

    #[test]
    fn extreme_bound_values() {
        let (lo, hi) = wishart_extreme_bounds(1, 101).unwrap();
        assert_relative_eq!(lo, 0.81, epsilon = 1e-12);
        assert_relative_eq!(hi, 1.22, epsilon = 1e-12);
        let (lo, hi) = wishart_extreme_bounds(5, 101).unwrap();
        assert_relative_eq!(lo, (1.0 - 0.05f64.sqrt()).powi(2), epsilon = 1e-15);
        assert_relative_eq!(hi, (1.0 + 0.05f64.sqrt()).powi(2) + 0.01, epsilon = 1e-15);
        assert_eq!(wishart_extreme_bounds(7, 8).unwrap().0, 0.0);
        assert!(wishart_extreme_bounds(0, 8).is_err());
    }

    #[test]
    fn extreme_bounds_hold_in_simulation() {
        let (lo, hi) = wishart_extreme_bounds(5, 101).unwrap();
        let stats = wishart_eigen_stats(5, 101, 10_000, 3).unwrap();
        assert!(stats.lambda_min.mean >= lo - 3.0 * stats.lambda_min.std_error);
        assert!(stats.lambda_max.mean <= hi + 3.0 * stats.lambda_max.std_error);
        assert!(stats.lambda_min.mean >= 0.5528 - 3.0 * stats.lambda_min.std_error);
        assert!(stats.lambda_max.mean <= 1.5028 + 3.0 * stats.lambda_max.std_error);
        for (l, k) in [(3, 31), (10, 101)] {
            let stats = wishart_eigen_stats(l, k, 10_000, 9).unwrap();
            assert!(stats.s_max_variance <= 1.0 + 3.0 * stats.s_max_variance_se);
        }
    }

    #[test]
    fn log_det_identity() {
        assert_relative_eq!(digamma(1.0), -EULER_GAMMA, epsilon = 1e-14);
        for (p, k) in [(2, 20), (5, 60)] {
            let exact = expected_log_det_wishart(p, k).unwrap();
            let est = log_det_wishart_mc(p, k, 1_000, 11).unwrap();
            assert!(est.within(exact, 3.0), "({p},{k}): {est:?} vs {exact}");
        }
        // with p = 1 the real form is E log(χ²_{k−1}/(k−1))
        let exact = digamma(4.5) + 2f64.ln() - 9f64.ln();
        assert_relative_eq!(expected_log_det_wishart(1, 10).unwrap(), exact, epsilon = 1e-14);
        assert!(expected_log_det_wishart(5, 5).is_err());
    }

    #[test]
    fn waterfill_cases() {
        assert_eq!(waterfill_logdet(&[2.0, 2.0, 2.0], 3, 50).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_relative_eq!(waterfill_logdet(&[7.0], 1, 50).unwrap()[0], 1.0, epsilon = 1e-12);
        assert!(waterfill_logdet(&[1.0, 0.0], 2, 50).is_err());
        assert!(waterfill_logdet(&[1.0], 2, 50).is_err());

        let b = [10.0, 1.0, 0.1];
        let x = waterfill_logdet(&b, 3, 50).unwrap();
        assert_relative_eq!(x.iter().sum::<f64>(), 3.0, epsilon = 1e-12);
        let (lo, hi) = wishart_extreme_bounds(3, 50).unwrap();
        assert!(x.iter().all(|&v| v >= lo && v <= hi));
        assert!(logdet_objective(&b, &x) <= logdet_objective(&b, &[1.0; 3]));
        // grid oracle over the feasible slice x₃ = 3 − x₁ − x₂, refined around the best cell
        let mut best = (f64::INFINITY, vec![1.0; 3]);
        let (mut c1, mut c2, mut half) = (0.5 * (lo + hi), 0.5 * (lo + hi), 0.5 * (hi - lo));
        for _ in 0..8 {
            for i in 0..=200 {
                for j in 0..=200 {
                    let x1 = c1 - half + 2.0 * half * i as f64 / 200.0;
                    let x2 = c2 - half + 2.0 * half * j as f64 / 200.0;
                    let x3 = 3.0 - x1 - x2;
                    let y = [x1, x2, x3];
                    if y.iter().all(|&v| v >= lo && v <= hi) {
                        let f = logdet_objective(&b, &y);
                        if f < best.0 {
                            best = (f, y.to_vec());
                        }
                    }
                }
            }
            c1 = best.1[0];
            c2 = best.1[1];
            half *= 0.1;
        }
        let y = best.1;
        assert!((logdet_objective(&b, &x) - logdet_objective(&b, &y)).abs() < 1e-6);
        assert!(logdet_objective(&b, &x) <= logdet_objective(&b, &y) + 1e-12);
    }

    #[test]
    fn waterfill_is_a_lower_bound_in_expectation() {
        let b = [50.0, 5.0, 0.5, 0.05];
        let k = 20;
        let x = waterfill_logdet(&b, 4, k).unwrap();
        let est = jensen_term_mc(&b, k, 1_000, 2).unwrap();
        assert!(est.mean >= logdet_objective(&b, &x) - 3.0 * est.std_error);
    }

    #[test]
    fn bound_dominates_monte_carlo() {
        let model = MeasurementModel::from_case(&cases::ieee14(), 0.1, 20.0).unwrap();
        let mut gaps = Vec::new();
        for k in [20usize, 50, 200] {
            let r = ergodic_bound_with_mc(&model, k, 300, k as u64).unwrap();
            let mc = r.mc_value.unwrap();
            assert!(r.bound_value >= mc.mean - 3.0 * mc.std_error, "k = {k}: {} vs {mc:?}", r.bound_value);
            gaps.push(r.bound_value - mc.mean);
        }
        assert!(gaps[2] < gaps[0]);
        assert!(ergodic_upper_bound(&model, 13).is_err());
        assert!(ergodic_upper_bound(&model, 14).is_ok());
    }

    #[test]
    fn bound_tends_to_perfect_cost() {
        let model = MeasurementModel::from_case(&cases::three_bus(), 0.4, 10.0).unwrap();
        let r = ergodic_upper_bound(&model, 10_000_000).unwrap();
        assert_relative_eq!(r.bound_value, perfect_statistics_cost(&model), max_relative = 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn waterfill_feasible_and_not_worse_than_uniform(
            b in proptest::collection::vec(0.01f64..100.0, 1..8),
            extra in 1usize..200,
        ) {
            let p = b.len();
            let k = p + 1 + extra;
            let x = waterfill_logdet(&b, p, k).unwrap();
            let (lo, hi) = wishart_extreme_bounds(p, k).unwrap();
            prop_assert!((x.iter().sum::<f64>() - p as f64).abs() < 1e-9);
            prop_assert!(x.iter().all(|&v| v >= lo - 1e-15 && v <= hi + 1e-15));
            prop_assert!(logdet_objective(&b, &x) <= logdet_objective(&b, &vec![1.0; p]) + 1e-12);
        }
    }
}
