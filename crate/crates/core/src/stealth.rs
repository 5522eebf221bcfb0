//! Gaussian stealth attacks.
//!
//! The attacker adds `A ~ N(0, Σ_AA)` to the measurements and trades the information the
//! operator retains about the state, `I(X; Y_A)`, against detectability measured by
//! `D(P_{Y_A} ‖ P_Y)`, weighting the latter by `λ ≥ 1`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::detection::{stealth_weights, StealthLrt, WeightedChiSquare};
use crate::error::{Error, Result};
use crate::estimation::MeasurementModel;
use crate::linalg::{check_psd, log_abs_det, log_det_spd, spd_inv_sqrt, symmetrize, SortedEigen};
use crate::mc::{self, McEstimate};
use crate::prior::GaussianSampler;

/// Zero-mean Gaussian attack with covariance `Σ_AA`, built for weight `λ`.
#[derive(Clone, Debug)]
pub struct StealthAttack {
    pub lambda: f64,
    pub sigma_aa: DMatrix<f64>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 1.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("lambda", lambda, "lambda >= 1"))
    }
}

fn check_attack(model: &MeasurementModel, sigma_aa: &DMatrix<f64>) -> Result<()> {
    if sigma_aa.shape() != (model.m(), model.m()) {
        return Err(Error::DimensionMismatch {
            context: "attack covariance",
            expected: model.m(),
            actual: sigma_aa.nrows(),
        });
    }
    check_psd(sigma_aa)
}

/// The attack `Σ_AA = (1/λ) H Σ_XX Hᵀ`.
pub fn optimal_attack(model: &MeasurementModel, lambda: f64) -> Result<StealthAttack> {
    check_lambda(lambda)?;
    Ok(StealthAttack {
        lambda,
        sigma_aa: model.signal_covariance() / lambda,
    })
}

/// `D(P_{Y_A} ‖ P_Y) = ½ (log|Σ_YY| − log|Σ_YY + Σ_AA| − m + tr(Σ_YY⁻¹ (Σ_YY + Σ_AA)))`.
pub fn kl_divergence(model: &MeasurementModel, sigma_aa: &DMatrix<f64>) -> Result<f64> {
    check_attack(model, sigma_aa)?;
    let log_det_ya = log_det_spd(&(model.sigma_yy() + sigma_aa))?;
    let trace = (model.sigma_yy_inv() * sigma_aa).trace();
    Ok((0.5 * (trace - (log_det_ya - model.log_det_sigma_yy()))).max(0.0))
}

/// Sample mean of the log-likelihood ratio under the attack, an unbiased estimate of
/// [`kl_divergence`].
pub fn kl_divergence_mc(
    model: &MeasurementModel,
    sigma_aa: &DMatrix<f64>,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    let lrt = StealthLrt::new(model, sigma_aa, 1.0)?;
    let ya = GaussianSampler::new(&symmetrize(&(model.sigma_yy() + sigma_aa)))?;
    Ok(mc::estimate_mean(trials, seed, |rng| lrt.log_ratio(&ya.sample(rng))))
}

/// `I(X; Y_A) = ½ (log|Σ_XX| + log|Σ_YY + Σ_AA| − log|Σ|)` with `Σ` the joint covariance of
/// `(X, Y_A)`.
pub fn mutual_information(model: &MeasurementModel, sigma_aa: &DMatrix<f64>) -> Result<f64> {
    check_attack(model, sigma_aa)?;
    let (n, m) = (model.n(), model.m());
    let sxx = model.sigma_xx();
    let cross = model.jacobian() * sxx;
    let sya = model.sigma_yy() + sigma_aa;
    let mut joint = DMatrix::zeros(n + m, n + m);
    joint.view_mut((0, 0), (n, n)).copy_from(sxx);
    joint.view_mut((n, 0), (m, n)).copy_from(&cross);
    joint.view_mut((0, n), (n, m)).copy_from(&cross.transpose());
    joint.view_mut((n, n), (m, m)).copy_from(&sya);
    let value = 0.5 * (log_det_spd(sxx)? + log_det_spd(&sya)? - log_det_spd(&joint)?);
    Ok(value.max(0.0))
}

/// Mutual information under the attack `Σ_AA = (1/λ) B`, `B = H Σ_XX Hᵀ`:
/// `½ log|B (σ² I + B/λ)⁻¹ + I|`.
pub fn mutual_information_optimal(model: &MeasurementModel, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let m = model.m();
    let b = model.signal_covariance();
    let shifted = DMatrix::identity(m, m) * model.noise_variance() + b / lambda;
    let chol = shifted.cholesky().ok_or(Error::NotPositiveDefinite)?;
    // B C⁻¹ has the same determinant as C⁻¹ B since both B and C are symmetric.
    let product = chol.solve(b) + DMatrix::identity(m, m);
    Ok(0.5 * log_abs_det(&product))
}

/// `I(X; Y)` without attack.
pub fn mutual_information_no_attack(model: &MeasurementModel) -> Result<f64> {
    mutual_information(model, &DMatrix::zeros(model.m(), model.m()))
}

/// `D(P_{X Y_A} ‖ P_X P_Y)`: divergence between the joint law under attack and the product of
/// the attack-free marginals.
pub fn joint_divergence(model: &MeasurementModel, sigma_aa: &DMatrix<f64>) -> Result<f64> {
    check_attack(model, sigma_aa)?;
    let (n, m) = (model.n(), model.m());
    let sxx = model.sigma_xx();
    let cross = model.jacobian() * sxx;
    let sya = model.sigma_yy() + sigma_aa;
    let mut joint = DMatrix::zeros(n + m, n + m);
    joint.view_mut((0, 0), (n, n)).copy_from(sxx);
    joint.view_mut((n, 0), (m, n)).copy_from(&cross);
    joint.view_mut((0, n), (n, m)).copy_from(&cross.transpose());
    joint.view_mut((n, n), (m, m)).copy_from(&sya);
    // reference covariance diag(Σ_XX, Σ_YY); its inverse is block diagonal
    let sxx_inv = sxx.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.inverse();
    let trace = (&sxx_inv * sxx).trace() + (model.sigma_yy_inv() * &sya).trace();
    let log_ref = log_det_spd(sxx)? + model.log_det_sigma_yy();
    Ok(0.5 * (log_ref - log_det_spd(&joint)? - (n + m) as f64 + trace))
}

/// Attack cost components in nats.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StealthCost {
    pub mi: f64,
    pub kl: f64,
    /// `mi + λ kl`.
    pub weighted: f64,
    /// `−(λ−1) log|Σ_YY+Σ_AA| − log|Σ_AA+σ²I| + λ tr(Σ_YY⁻¹Σ_AA)`.
    pub objective: f64,
    /// `weighted − objective / 2`, which does not depend on `Σ_AA`.
    pub constant: f64,
}

pub fn weighted_cost(
    model: &MeasurementModel,
    sigma_aa: &DMatrix<f64>,
    lambda: f64,
) -> Result<StealthCost> {
    check_lambda(lambda)?;
    let mi = mutual_information(model, sigma_aa)?;
    let kl = kl_divergence(model, sigma_aa)?;
    let m = model.m();
    let log_det_ya = log_det_spd(&(model.sigma_yy() + sigma_aa))?;
    let log_det_noisy = log_det_spd(&(sigma_aa + DMatrix::identity(m, m) * model.noise_variance()))?;
    let trace = (model.sigma_yy_inv() * sigma_aa).trace();
    let objective = -(lambda - 1.0) * log_det_ya - log_det_noisy + lambda * trace;
    let weighted = mi + lambda * kl;
    Ok(StealthCost {
        mi,
        kl,
        weighted,
        objective,
        constant: weighted - 0.5 * objective,
    })
}

/// Gradient of `mi + λ kl` with respect to `Σ_AA`:
/// `½ ((1−λ)(Σ_YY+Σ_AA)⁻¹ − (Σ_AA+σ²I)⁻¹ + λ Σ_YY⁻¹)`.
pub fn weighted_cost_gradient(
    model: &MeasurementModel,
    sigma_aa: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    check_attack(model, sigma_aa)?;
    let m = model.m();
    let inv = |s: DMatrix<f64>| {
        symmetrize(&s)
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(Error::NotPositiveDefinite)
    };
    let ya = inv(model.sigma_yy() + sigma_aa)?;
    let noisy = inv(sigma_aa + DMatrix::identity(m, m) * model.noise_variance())?;
    Ok(symmetrize(&((ya * (1.0 - lambda) - noisy + model.sigma_yy_inv() * lambda) * 0.5)))
}

fn check_tau_above_one(tau: f64) -> Result<()> {
    if tau > 1.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("tau", tau, "tau > 1"))
    }
}

/// Residual of `2λ log τ − tr(Δ²)/(2λ) − 2√(tr(Δ²) t) − 2‖Δ‖_∞ t`.
pub fn detection_bound_residual(weights: &WeightedChiSquare, tau: f64, t: f64, lambda: f64) -> f64 {
    let tr = weights.sum_squares();
    2.0 * lambda * tau.ln() - tr / (2.0 * lambda) - 2.0 * (tr * t).sqrt() - 2.0 * weights.max_weight() * t
}

/// `λ*(t)`: the positive root of [`detection_bound_residual`], found by bisection.
///
/// For `λ ≥ max(λ*(t), 1)` the optimal stealth attack is detected with probability at most
/// `e^{−t}`.
pub fn detection_bound_lambda(model: &MeasurementModel, tau: f64, t: f64) -> Result<f64> {
    check_tau_above_one(tau)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain("t", t, "t > 0"));
    }
    let weights = stealth_weights(model, 1.0)?;
    if let Some(&w) = weights.weights().iter().find(|&&w| w > 1.0) {
        log::warn!("stealth weight {w} exceeds 1; the detection bound may not hold");
    }
    let f = |l: f64| detection_bound_residual(&weights, tau, t, l);
    let mut lo = 1e-6;
    let mut hi = 1.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
    }
    if f(lo) > 0.0 {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest `t` with `λ*(t) ≤ λ`, so that `P_D(λ) ≤ e^{−t}`. Zero when the bound is vacuous.
pub fn detection_bound_exponent(weights: &WeightedChiSquare, tau: f64, lambda: f64) -> f64 {
    let tr = weights.sum_squares();
    let inf = weights.max_weight();
    let r = 2.0 * lambda * tau.ln() - tr / (2.0 * lambda);
    if r <= 0.0 || inf == 0.0 {
        return 0.0;
    }
    let s = (-(tr.sqrt()) + (tr + 2.0 * inf * r).sqrt()) / (2.0 * inf);
    s * s
}

/// Empirical Type-II error exponents of the block likelihood-ratio test.
#[derive(Clone, Debug)]
pub struct ChernoffStein {
    pub blocks: Vec<usize>,
    pub log_beta: Vec<f64>,
    /// Least-squares slope of `log β_T` over `T`.
    pub slope: f64,
    pub kl: f64,
}

/// Estimates `β_T`, the probability under `P_Y` of accepting the attack hypothesis with a test
/// that errs with probability `epsilon` under `P_{Y_A}`, for each block length in `blocks`.
///
/// The statistic `S_T = Σ_t log L(y_t)` is simulated under `P_{Y_A}`; the threshold is its
/// `epsilon`-quantile and `β_T = E_{Y_A}[1{S_T ≥ thr} e^{−S_T}]`.
pub fn chernoff_stein(
    model: &MeasurementModel,
    sigma_aa: &DMatrix<f64>,
    blocks: &[usize],
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<ChernoffStein> {
    check_attack(model, sigma_aa)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain("epsilon", epsilon, "0 < epsilon < 1"));
    }
    if blocks.len() < 2 || trials < 2 {
        return Err(Error::NoSolution("need at least two block lengths and two trials".into()));
    }
    let mut blocks = blocks.to_vec();
    blocks.sort_unstable();
    // In Σ_YY-whitened coordinates log L = ½ Σ (γ_i u_i² − log(1+γ_i)) with u ~ N(0, I) under
    // the attack, γ_i the eigenvalues of Σ_YY^{-1/2} Σ_AA Σ_YY^{-1/2}.
    let w = spd_inv_sqrt(model.sigma_yy())?;
    let eig = SortedEigen::new(&(&w * sigma_aa * &w));
    let gammas: Vec<f64> = eig.values.iter().take(eig.rank()).copied().collect();
    let offset: f64 = gammas.iter().map(|g| g.ln_1p()).sum();
    let kl = 0.5 * gammas.iter().map(|g| g - g.ln_1p()).sum::<f64>();
    let t_max = *blocks.last().unwrap_or(&0);

    let per_trial = mc::run_chunked(
        trials,
        seed,
        Vec::new(),
        |rng, count| {
            (0..count)
                .map(|_| {
                    let mut s = 0.0;
                    let mut out = Vec::with_capacity(blocks.len());
                    let mut next = 0;
                    for t in 1..=t_max {
                        let q: f64 = gammas
                            .iter()
                            .map(|g| {
                                let u: f64 = StandardNormal.sample(rng);
                                g * u * u
                            })
                            .sum();
                        s += 0.5 * (q - offset);
                        while next < blocks.len() && blocks[next] == t {
                            out.push(s);
                            next += 1;
                        }
                    }
                    out
                })
                .collect::<Vec<_>>()
        },
        |mut acc, part| {
            acc.extend(part);
            acc
        },
    );

    let mut log_beta = Vec::with_capacity(blocks.len());
    for (j, _) in blocks.iter().enumerate() {
        let mut stats: Vec<f64> = per_trial.iter().map(|v| v[j]).collect();
        stats.sort_by(f64::total_cmp);
        let idx = ((epsilon * trials as f64).floor() as usize).min(trials - 1);
        let thr = stats[idx];
        let beta = stats
            .iter()
            .filter(|&&s| s >= thr)
            .map(|s| (-s).exp())
            .sum::<f64>()
            / trials as f64;
        log_beta.push(beta.ln());
    }
    let xs: Vec<f64> = blocks.iter().map(|&t| t as f64).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = log_beta.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&log_beta).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(ChernoffStein {
        blocks,
        log_beta,
        slope: sxy / sxx,
        kl,
    })
}

/// Random PSD direction `v vᵀ` with `v` a standard normal vector.
pub fn random_psd_direction(m: usize, rng: &mut mc::Rng) -> DMatrix<f64> {
    let v = DVector::<f64>::from_fn(m, |_, _| StandardNormal.sample(rng));
    &v * v.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::detection::{prob_detection_stealth, TailMethod};
    use crate::estimation::tests::two_bus;
    use crate::grid::{build_jacobian, GridCase};
    use crate::prior::{NoiseModel, StatePrior};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn optimal_attack_examples() {
        let model = two_bus(1.0);
        assert_eq!(optimal_attack(&model, 1.0).unwrap().sigma_aa, *model.signal_covariance());
        let half = optimal_attack(&model, 2.0).unwrap().sigma_aa;
        let h = model.jacobian();
        assert_relative_eq!(half, h * h.transpose() * 0.5, epsilon = 1e-15);
        assert!(optimal_attack(&model, 1e12).unwrap().sigma_aa.amax() < 1e-11);
        assert!(optimal_attack(&model, 0.9).is_err());
    }

    #[test]
    fn two_bus_mutual_information() {
        let model = two_bus(1.0);
        let saa = optimal_attack(&model, 1.0).unwrap().sigma_aa;
        // eigenvalue 4 of B: ½ log(4 / (1 + 4) + 1)
        let expected = 0.5 * 1.8f64.ln();
        assert_relative_eq!(mutual_information_optimal(&model, 1.0).unwrap(), expected, epsilon = 1e-12);
        assert_relative_eq!(mutual_information(&model, &saa).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn kl_basics() {
        let model = two_bus(1.0);
        let zero = DMatrix::zeros(4, 4);
        assert_eq!(kl_divergence(&model, &zero).unwrap(), 0.0);
        let saa = optimal_attack(&model, 1.0).unwrap().sigma_aa;
        let kl = kl_divergence(&model, &saa).unwrap();
        assert!(kl > 0.0);
        let e = kl_divergence_mc(&model, &saa, 1_000_000, 8).unwrap();
        assert!(e.within(kl, 3.0), "kl {kl}, mc {e:?}");
    }

    #[test]
    fn mi_routes_agree_on_ieee14() {
        let model = MeasurementModel::from_case(&cases::ieee14(), 0.1, 10.0).unwrap();
        for lambda in [1.0, 2.0, 10.0, 100.0] {
            let saa = optimal_attack(&model, lambda).unwrap().sigma_aa;
            let joint = mutual_information(&model, &saa).unwrap();
            let closed = mutual_information_optimal(&model, lambda).unwrap();
            assert_relative_eq!(joint, closed, max_relative = 1e-9);
        }
        // I(X;Y) − I(X;Y_A) ≈ (1/2λ) Σ μ² / (σ² (μ + σ²)) for large λ
        let none = mutual_information_no_attack(&model).unwrap();
        let s2 = model.noise_variance();
        let rate: f64 = model.signal_eigen().values.iter().map(|mu| mu * mu / (s2 * (mu + s2))).sum::<f64>() / 2.0;
        for lambda in [1e4, 1e6] {
            let gap = none - mutual_information_optimal(&model, lambda).unwrap();
            assert_relative_eq!(gap * lambda, rate, max_relative = 1e-2);
        }
    }

    #[test]
    fn mi_decreases_with_added_noise() {
        let model = MeasurementModel::from_case(&GridCase::random_connected(5, 2, 6), 0.4, 10.0).unwrap();
        let m = model.m();
        let mut last = f64::INFINITY;
        for s in [0.0, 0.1, 1.0, 10.0, 100.0] {
            let mi = mutual_information(&model, &(DMatrix::identity(m, m) * s)).unwrap();
            assert!(mi <= last);
            last = mi;
        }
    }

    #[test]
    fn weighted_cost_identities() {
        let model = MeasurementModel::from_case(&cases::ieee14(), 0.5, 10.0).unwrap();
        let zero = DMatrix::zeros(model.m(), model.m());
        let c0 = weighted_cost(&model, &zero, 3.0).unwrap();
        assert_relative_eq!(c0.weighted, mutual_information_no_attack(&model).unwrap(), epsilon = 1e-12);
        let saa = optimal_attack(&model, 1.0).unwrap().sigma_aa;
        let c1 = weighted_cost(&model, &saa, 1.0).unwrap();
        assert_relative_eq!(c1.weighted, joint_divergence(&model, &saa).unwrap(), max_relative = 1e-9);
        // the constant does not depend on the attack
        let c2 = weighted_cost(&model, &(&saa * 0.3), 1.0).unwrap();
        assert_relative_eq!(c1.constant, c2.constant, max_relative = 1e-9);
        assert_relative_eq!(c1.constant, 0.5 * model.log_det_sigma_yy(), max_relative = 1e-9);
    }

    #[test]
    fn cost_is_convex_around_unit_weight_optimum() {
        let model = MeasurementModel::from_case(&GridCase::random_connected(5, 3, 2), 0.3, 10.0).unwrap();
        let saa = optimal_attack(&model, 1.0).unwrap().sigma_aa;
        let base = weighted_cost(&model, &saa, 1.0).unwrap().weighted;
        let mut rng = mc::rng(3);
        for _ in 0..50 {
            let d = random_psd_direction(model.m(), &mut rng);
            for t in [1e-3, 1e-2] {
                assert!(weighted_cost(&model, &(&saa + &d * t), 1.0).unwrap().weighted >= base - 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let model = MeasurementModel::from_case(&GridCase::random_connected(4, 1, 5), 0.3, 10.0).unwrap();
        let saa = optimal_attack(&model, 3.0).unwrap().sigma_aa + DMatrix::identity(model.m(), model.m()) * 0.1;
        let g = weighted_cost_gradient(&model, &saa, 3.0).unwrap();
        let mut rng = mc::rng(8);
        for _ in 0..10 {
            let d = random_psd_direction(model.m(), &mut rng);
            let h = 1e-5;
            let f = |t: f64| weighted_cost(&model, &(&saa + &d * t), 3.0).unwrap().weighted;
            let fd = (f(h) - f(-h)) / (2.0 * h);
            assert_relative_eq!(fd, (&g * &d).trace(), max_relative = 1e-5, epsilon = 1e-8);
        }
    }

    #[test]
    fn unit_weight_optimum_is_stationary() {
        let model = MeasurementModel::from_case(&cases::ieee14(), 0.1, 10.0).unwrap();
        let saa = optimal_attack(&model, 1.0).unwrap().sigma_aa;
        let g = weighted_cost_gradient(&model, &saa, 1.0).unwrap();
        assert!(g.amax() < 1e-9);
    }

    #[test]
    fn bound_lambda_root_and_monotonicity() {
        let model = MeasurementModel::from_case(&cases::ieee14(), 0.1, 10.0).unwrap();
        let w = stealth_weights(&model, 1.0).unwrap();
        let mut last = 0.0;
        for t in [0.1, 0.5, 1.0, 2.0, 100f64.ln(), 10.0] {
            let l = detection_bound_lambda(&model, 2.0, t).unwrap();
            assert!(detection_bound_residual(&w, 2.0, t, l).abs() < 1e-10);
            assert!(l > last);
            last = l;
            assert_relative_eq!(detection_bound_exponent(&w, 2.0, l), t, max_relative = 1e-8);
        }
        assert!(detection_bound_lambda(&model, 1.0, 1.0).is_err());
        assert_eq!(detection_bound_exponent(&w, 2.0, 1e-3), 0.0);
    }

    #[test]
    fn bound_holds_on_ieee14() {
        let model = MeasurementModel::from_case(&cases::ieee14(), 0.1, 10.0).unwrap();
        let t = 100f64.ln();
        let lambda = detection_bound_lambda(&model, 2.0, t).unwrap().max(1.0);
        let pd = prob_detection_stealth(&model, lambda, 2.0, TailMethod::CfInversion).unwrap();
        assert!(pd.value <= 0.01);
    }

    #[test]
    fn chernoff_stein_slope_two_bus() {
        let model = two_bus(1.0);
        let saa = optimal_attack(&model, 1.0).unwrap().sigma_aa;
        let blocks: Vec<usize> = (100..=200).step_by(20).collect();
        let cs = chernoff_stein(&model, &saa, &blocks, 0.4, 100_000, 4).unwrap();
        assert_relative_eq!(cs.kl, kl_divergence(&model, &saa).unwrap(), max_relative = 1e-10);
        assert!((cs.slope / -cs.kl - 1.0).abs() < 0.15, "{cs:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn permutation_invariance(seed in any::<u64>(), lambda in 1.0f64..20.0) {
            let case = GridCase::random_connected(5, 2, seed);
            let h = build_jacobian(&case).matrix;
            let prior = StatePrior::toeplitz(4, 0.4).unwrap();
            let noise = NoiseModel::from_snr(&h, &prior, 10.0).unwrap();
            let model = MeasurementModel::new(h.clone(), &prior, noise).unwrap();
            let m = h.nrows();
            let perm: Vec<usize> = (0..m).rev().collect();
            let p = DMatrix::from_fn(m, m, |i, j| if perm[i] == j { 1.0 } else { 0.0 });
            let permuted = MeasurementModel::new(&p * h, &prior, noise).unwrap();
            let saa = optimal_attack(&model, lambda).unwrap().sigma_aa;
            let saa_p = &p * &saa * p.transpose();
            let (a, b) = (kl_divergence(&model, &saa).unwrap(), kl_divergence(&permuted, &saa_p).unwrap());
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + a));
            let (a, b) = (mutual_information(&model, &saa).unwrap(), mutual_information(&permuted, &saa_p).unwrap());
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + a));
        }

        #[test]
        fn mi_grows_and_detection_falls_with_lambda(seed in any::<u64>()) {
            let model = MeasurementModel::from_case(&GridCase::random_connected(6, 3, seed), 0.5, 10.0).unwrap();
            let lambdas = [1.0, 2.0, 4.0, 8.0, 16.0];
            let mi: Vec<f64> = lambdas.iter().map(|&l| mutual_information_optimal(&model, l).unwrap()).collect();
            prop_assert!(mi.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }
    }
}
