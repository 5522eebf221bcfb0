//! Closed-form deterministic attacks for a single attacker controlling all measurements.
//!
//! The attacker adds a fixed vector `a` and the operator runs the deterministic LRT. The attack
//! effect is summarized by two quadratic forms: the detection statistic `x = aᵀΣ_YY⁻¹a`, which
//! sets the non-detection probability, and the excess distortion `aᵀQa` with
//! `Q = Σ_YY⁻¹ H Σ_XX² Hᵀ Σ_YY⁻¹`. All constructions are aligned with eigenvectors of
//! `G = Σ_YY^{-1/2} H Σ_XX² Hᵀ Σ_YY^{-1/2}` or of `Σ_YY`.
//!
//! Every construction is determined up to sign; the returned vector uses the sign convention of
//! [`SortedEigen`] and [`AttackVector::negated`] gives its mirror.

use nalgebra::{DMatrix, DVector};

use crate::detection::prob_not_detected_quadratic;
use crate::error::{Error, Result};
use crate::estimation::MeasurementModel;
use crate::linalg::{psd_sqrt, spd_inv_sqrt, symmetrize, SortedEigen};
use crate::special::erfc_inv;

/// Relative gap below which two leading eigenvalues of `G` count as equal.
pub const MULTIPLICITY_TOLERANCE: f64 = 1e-9;

/// A deterministic injection `a` with its energy `aᵀa`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackVector {
    pub a: DVector<f64>,
    pub energy: f64,
}

impl AttackVector {
    pub fn new(a: DVector<f64>) -> Self {
        let energy = a.norm_squared();
        AttackVector { a, energy }
    }

    pub fn negated(&self) -> Self {
        AttackVector {
            a: -&self.a,
            energy: self.energy,
        }
    }

    /// Whether the attack respects the energy budget `aᵀa ≤ budget`.
    pub fn within_budget(&self, budget: f64) -> bool {
        self.energy <= budget
    }
}

/// The matrix `G` with its sorted spectrum and the square roots of `Σ_YY` used to map its
/// eigenvectors to attack vectors.
#[derive(Clone, Debug)]
pub struct GMatrix {
    pub g: DMatrix<f64>,
    pub eigen: SortedEigen,
    sigma_yy_sqrt: DMatrix<f64>,
}

impl GMatrix {
    pub fn new(model: &MeasurementModel) -> Result<Self> {
        let inv_sqrt = spd_inv_sqrt(model.sigma_yy())?;
        let hs = model.jacobian() * model.sigma_xx();
        let inner = &hs * hs.transpose();
        let g = symmetrize(&(&inv_sqrt * inner * &inv_sqrt));
        let eigen = SortedEigen::new(&g);
        Ok(GMatrix {
            g,
            eigen,
            sigma_yy_sqrt: psd_sqrt(model.sigma_yy()),
        })
    }

    /// `λ_{G,i}`, descending.
    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.eigen.values[i]
    }

    pub fn rank(&self) -> usize {
        self.eigen.rank()
    }

    /// Whether `λ_{G,1}` is repeated, so that the top eigenvector is not unique.
    pub fn top_is_degenerate(&self) -> bool {
        self.eigen.len() > 1
            && self.eigen.values[0] - self.eigen.values[1]
                <= MULTIPLICITY_TOLERANCE * self.eigen.values[0].abs()
    }

    /// `Σ_YY^{1/2} u_{G,i}`.
    pub fn direction(&self, i: usize) -> DVector<f64> {
        &self.sigma_yy_sqrt * self.eigen.vector(i)
    }
}

/// A closed-form attack with the quantities that certify it.
#[derive(Clone, Debug)]
pub struct ClosedFormAttack {
    pub attack: AttackVector,
    /// Index (0-based) of the eigenvector the attack is aligned with.
    pub eigen_index: usize,
    /// `aᵀΣ_YY⁻¹a`.
    pub quadratic: f64,
    /// `aᵀ Q a`.
    pub distortion: f64,
    /// Non-detection probability; `None` for the null attack.
    pub p_nd: Option<f64>,
    /// The aligned eigenvalue is repeated and the direction was picked from its eigenspace.
    pub degenerate: bool,
}

impl ClosedFormAttack {
    fn build(model: &MeasurementModel, g: &GMatrix, a: DVector<f64>, k: usize, tau: f64) -> Result<Self> {
        let quadratic = model.mahalanobis(&a)?;
        let distortion = model.excess_distortion(&a)?;
        let p_nd = if quadratic > 0.0 {
            Some(prob_not_detected_quadratic(quadratic, tau)?)
        } else {
            None
        };
        Ok(ClosedFormAttack {
            attack: AttackVector::new(a),
            eigen_index: k,
            quadratic,
            distortion,
            p_nd,
            degenerate: k == 0 && g.top_is_degenerate(),
        })
    }

    /// The attack and its mirror image.
    pub fn pair(&self) -> [AttackVector; 2] {
        [self.attack.clone(), self.attack.negated()]
    }

    /// Whether `aᵀa ≤ budget`. Constructions never project onto the budget.
    pub fn within_budget(&self, budget: f64) -> bool {
        self.attack.within_budget(budget)
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(name, value, "> 0"))
    }
}

fn top(g: &GMatrix) -> Result<f64> {
    let l = if g.eigen.is_empty() { 0.0 } else { g.eigenvalue(0) };
    if l > 0.0 {
        Ok(l)
    } else {
        Err(Error::ZeroJacobian)
    }
}

/// Attacks minimizing detection for `τ > 1`: `±√(2 λ_{YY,k} log τ) u_{YY,k}` for every
/// eigenpair of `Σ_YY`, each with `aᵀΣ_YY⁻¹a = 2 log τ`.
///
/// For `τ ≤ 1` the null attack is optimal and [`Error::NullAttackOptimal`] is returned.
pub fn min_detection_directions(model: &MeasurementModel, tau: f64) -> Result<Vec<AttackVector>> {
    positive("tau", tau)?;
    if tau <= 1.0 {
        return Err(Error::NullAttackOptimal { tau });
    }
    let eig = model.sigma_yy_eigen();
    let two_log_tau = 2.0 * tau.ln();
    let mut out = Vec::with_capacity(2 * eig.len());
    for k in 0..eig.len() {
        let a = eig.vector(k) * (eig.values[k] * two_log_tau).sqrt();
        let v = AttackVector::new(a);
        out.push(v.negated());
        out.push(v);
    }
    Ok(out)
}

/// Least detectable attack with excess distortion at least `d0` when `τ ≤ 1`:
/// `√(d0/λ_{G,1}) Σ_YY^{1/2} u_{G,1}`.
pub fn min_detect_attack_small_tau(model: &MeasurementModel, d0: f64, tau: f64) -> Result<ClosedFormAttack> {
    positive("d0", d0)?;
    positive("tau", tau)?;
    if tau > 1.0 {
        return Err(Error::domain("tau", tau, "0 < tau <= 1"));
    }
    let g = GMatrix::new(model)?;
    let l1 = top(&g)?;
    let a = g.direction(0) * (d0 / l1).sqrt();
    ClosedFormAttack::build(model, &g, a, 0, tau)
}

/// Least detectable attack with excess distortion at least `d0` when `τ > 1`.
///
/// The non-detection probability is unimodal in `x = aᵀΣ_YY⁻¹a` with its peak at `2 log τ`,
/// and the smallest `x` reaching distortion `d0` is `d0/λ_{G,1}` along `Σ_YY^{1/2} u_{G,1}`.
/// The attack is therefore `√(max(2 log τ, d0/λ_{G,1})) Σ_YY^{1/2} u_{G,1}`.
pub fn min_detect_attack_large_tau(model: &MeasurementModel, d0: f64, tau: f64) -> Result<ClosedFormAttack> {
    positive("d0", d0)?;
    positive("tau", tau)?;
    if tau <= 1.0 {
        return Err(Error::NullAttackOptimal { tau });
    }
    let g = GMatrix::new(model)?;
    let l1 = top(&g)?;
    let x = (d0 / l1).max(2.0 * tau.ln());
    let a = g.direction(0) * x.sqrt();
    ClosedFormAttack::build(model, &g, a, 0, tau)
}

/// Index `k*` minimizing `d0/λ_{G,k}` over the eigenvalues with `d0/λ_{G,k} > 2 log τ`; ties go
/// to the smaller index. `None` when no eigenvalue qualifies.
pub fn feasible_index(g: &GMatrix, d0: f64, tau: f64) -> Option<usize> {
    let two_log_tau = 2.0 * tau.ln();
    (0..g.rank())
        .filter(|&k| d0 / g.eigenvalue(k) > two_log_tau)
        .min_by(|&i, &j| (d0 / g.eigenvalue(i)).total_cmp(&(d0 / g.eigenvalue(j))).then(i.cmp(&j)))
}

/// Attack of maximal excess distortion among those with non-detection probability at least
/// `l0_prime`: `(√2 L₀ + √(2L₀² − 2 log τ)) Σ_YY^{1/2} u_{G,1}` with `L₀ = erfc⁻¹(2 l0_prime)`.
///
/// No attack qualifies when `L₀² < log τ`.
pub fn max_distortion_attack(model: &MeasurementModel, l0_prime: f64, tau: f64) -> Result<ClosedFormAttack> {
    positive("tau", tau)?;
    if !(l0_prime > 0.0 && l0_prime <= 0.5) {
        return Err(Error::domain("l0_prime", l0_prime, "0 < l0_prime <= 1/2"));
    }
    let l0 = erfc_inv(2.0 * l0_prime);
    let disc = 2.0 * l0 * l0 - 2.0 * tau.ln();
    if disc < 0.0 {
        return Err(Error::NoSolution(format!(
            "non-detection floor {l0_prime} is unreachable at tau = {tau} (L0^2 = {:.6} < log tau = {:.6})",
            l0 * l0,
            tau.ln()
        )));
    }
    let g = GMatrix::new(model)?;
    top(&g)?;
    let s = std::f64::consts::SQRT_2 * l0 + disc.sqrt();
    let a = g.direction(0) * s;
    ClosedFormAttack::build(model, &g, a, 0, tau)
}

/// Residuals of the first-order conditions for `min aᵀΣ_YY⁻¹a` subject to `aᵀQa ≥ d0`:
/// stationarity `(Σ_YY⁻¹ − γ Q) a = 0` and the active constraint `aᵀQa = d0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktCertificate {
    /// Multiplier `γ = 1/λ_{G,1}`.
    pub multiplier: f64,
    /// `‖(Σ_YY⁻¹ − γQ)a‖ / ‖Σ_YY⁻¹a‖`.
    pub stationarity: f64,
    /// `|aᵀQa − d0| / d0`.
    pub feasibility: f64,
}

impl KktCertificate {
    pub fn holds(&self, tol: f64) -> bool {
        self.multiplier > 0.0 && self.stationarity < tol && self.feasibility < tol
    }
}

pub fn kkt_certificate(model: &MeasurementModel, a: &DVector<f64>, d0: f64) -> Result<KktCertificate> {
    let g = GMatrix::new(model)?;
    let gamma = 1.0 / top(&g)?;
    let w = model.solve(a)?;
    let q = model.distortion_matrix();
    let qa = &q * a;
    let stationarity = (&w - &qa * gamma).norm() / w.norm();
    let feasibility = (a.dot(&qa) - d0).abs() / d0;
    Ok(KktCertificate {
        multiplier: gamma,
        stationarity,
        feasibility,
    })
}
