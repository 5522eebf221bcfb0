//! Decentralized deterministic attackers sharing the utility
//! `φ(a) = P_ND(a) · aᵀQa`, with `Q = Σ_YY⁻¹ H Σ_XX² Hᵀ Σ_YY⁻¹`.
//!
//! Attacker `k` controls the sensors in `C_k` under the energy budget `a_kᵀa_k ≤ E_k`. Since all
//! attackers maximize the same function, `φ` is a potential of the game and sequential best
//! responses never decrease it.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::detattack::GMatrix;
use crate::error::{Error, Result};
use crate::estimation::MeasurementModel;
use crate::linalg::{symmetrize, SortedEigen};
use crate::mc;
use crate::special::{erfc, erfcx};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("tau", tau, "> 0"))
    }
}

/// The shared utility with the matrices it needs cached.
#[derive(Clone, Debug)]
pub struct Utility {
    sigma_yy_inv: DMatrix<f64>,
    q: DMatrix<f64>,
    log_tau: f64,
}

/// Utility and its gradient at one point.
#[derive(Clone, Debug)]
pub struct UtilityPoint {
    pub value: f64,
    pub gradient: DVector<f64>,
}

impl Utility {
    pub fn new(model: &MeasurementModel, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(Utility {
            sigma_yy_inv: model.sigma_yy_inv().clone(),
            q: model.distortion_matrix(),
            log_tau: tau.ln(),
        })
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn check(&self, a: &DVector<f64>) -> Result<()> {
        if a.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "attack vector",
                expected: self.dim(),
                actual: a.len(),
            });
        }
        Ok(())
    }

    /// `erfc` argument `(x/2 + log τ)/√(2x)`.
    fn argument(&self, x: f64) -> f64 {
        (0.5 * x + self.log_tau) / (2.0 * x).sqrt()
    }

    /// `φ(a)`, with `φ(0) = 0`.
    pub fn value(&self, a: &DVector<f64>) -> Result<f64> {
        self.check(a)?;
        let x = a.dot(&(&self.sigma_yy_inv * a));
        if x <= 0.0 {
            return Ok(0.0);
        }
        let d = a.dot(&(&self.q * a));
        Ok(0.5 * erfc(self.argument(x)) * d)
    }

    /// `φ(a)` and `∇φ(a) = (α Q − β Σ_YY⁻¹) a` with `α = erfc(g)` and
    /// `β = aᵀQa (½ − log τ / x) e^{−g²} / (√(2π) √x)`.
    pub fn evaluate(&self, a: &DVector<f64>) -> Result<UtilityPoint> {
        self.check(a)?;
        let w = &self.sigma_yy_inv * a;
        let x = a.dot(&w);
        if x <= 0.0 {
            return Ok(UtilityPoint {
                value: 0.0,
                gradient: DVector::zeros(a.len()),
            });
        }
        let qa = &self.q * a;
        let d = a.dot(&qa);
        let g = self.argument(x);
        let alpha = erfc(g);
        let beta = d * (0.5 - self.log_tau / x) * (-g * g).exp() / (SQRT_2PI * x.sqrt());
        Ok(UtilityPoint {
            value: 0.5 * alpha * d,
            gradient: qa * alpha - w * beta,
        })
    }
}

/// `φ(a) = P_ND(a) aᵀQa`.
pub fn utility(model: &MeasurementModel, a: &DVector<f64>, tau: f64) -> Result<f64> {
    Utility::new(model, tau)?.value(a)
}

/// `∇_a φ(a)`.
pub fn utility_gradient(model: &MeasurementModel, a: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    Ok(Utility::new(model, tau)?.evaluate(a)?.gradient)
}

/// Sensor sets `C_k` (0-based measurement indices) partitioning `{0..m}` with budgets `E_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackPartition {
    sets: Vec<Vec<usize>>,
    budgets: Vec<f64>,
    m: usize,
}

impl AttackPartition {
    pub fn new(sets: Vec<Vec<usize>>, budgets: Vec<f64>, m: usize) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::Partition("no attackers".into()));
        }
        if sets.len() != budgets.len() {
            return Err(Error::Partition(format!(
                "{} sensor sets but {} budgets",
                sets.len(),
                budgets.len()
            )));
        }
        let mut seen = BTreeSet::new();
        let mut sorted = Vec::with_capacity(sets.len());
        for (k, set) in sets.into_iter().enumerate() {
            if set.is_empty() {
                return Err(Error::Partition(format!("attacker {k} controls no sensor")));
            }
            for &i in &set {
                if i >= m {
                    return Err(Error::Partition(format!("sensor {i} out of range 0..{m}")));
                }
                if !seen.insert(i) {
                    return Err(Error::Partition(format!("sensor {i} assigned twice")));
                }
            }
            let mut set = set;
            set.sort_unstable();
            sorted.push(set);
        }
        if seen.len() != m {
            let missing = (0..m).find(|i| !seen.contains(i)).unwrap_or(0);
            return Err(Error::Partition(format!("sensor {missing} is not assigned")));
        }
        for (k, &e) in budgets.iter().enumerate() {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Partition(format!("budget of attacker {k} is {e}, expected finite > 0")));
            }
        }
        Ok(AttackPartition {
            sets: sorted,
            budgets,
            m,
        })
    }

    /// A single attacker controlling every sensor.
    pub fn single(m: usize, budget: f64) -> Result<Self> {
        Self::new(vec![(0..m).collect()], vec![budget], m)
    }

    /// Parses `"0,1;2,3"` style sensor sets with one shared budget.
    pub fn parse(spec: &str, budget: f64, m: usize) -> Result<Self> {
        let sets = spec
            .split(';')
            .map(|group| {
                group
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::Partition(format!("invalid sensor index {:?}", s.trim())))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let k = sets.len();
        Self::new(sets, vec![budget; k], m)
    }

    /// Number of attackers `K`.
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn measurement_count(&self) -> usize {
        self.m
    }

    pub fn set(&self, k: usize) -> &[usize] {
        &self.sets[k]
    }

    pub fn budget(&self, k: usize) -> f64 {
        self.budgets[k]
    }

    fn restrict(&self, k: usize, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.sets[k].len(), self.sets[k].iter().map(|&i| v[i]))
    }

    fn embed(&self, k: usize, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (j, &i) in self.sets[k].iter().enumerate() {
            out[i] = v[j];
        }
        out
    }

    /// Projection onto `{a : supp(a) ⊆ C_k, ‖a‖² ≤ E_k}` in restricted coordinates.
    fn project(&self, k: usize, v: DVector<f64>) -> DVector<f64> {
        let radius = self.budgets[k].sqrt();
        let norm = v.norm();
        if norm > radius {
            v * (radius / norm)
        } else {
            v
        }
    }

    /// Whether `a_k` is supported on `C_k` and within budget.
    pub fn is_feasible(&self, k: usize, a_k: &DVector<f64>) -> bool {
        a_k.len() == self.m
            && a_k.iter().enumerate().all(|(i, &v)| v == 0.0 || self.sets[k].binary_search(&i).is_ok())
            && a_k.norm_squared() <= self.budgets[k] * (1.0 + 1e-12)
    }
}

/// One attack per attacker, each of full length `m` and supported on its own set.
#[derive(Clone, Debug, PartialEq)]
pub struct GameState {
    pub attacks: Vec<DVector<f64>>,
    pub round: usize,
}

impl GameState {
    pub fn zero(partition: &AttackPartition) -> Self {
        GameState {
            attacks: vec![DVector::zeros(partition.m); partition.len()],
            round: 0,
        }
    }

    /// Global attack `a = Σ_k a_k`.
    pub fn total(&self) -> DVector<f64> {
        let m = self.attacks.first().map_or(0, |a| a.len());
        self.attacks.iter().fold(DVector::zeros(m), |acc, a| acc + a)
    }

    /// `Σ_{j≠k} a_j`.
    pub fn others(&self, k: usize) -> DVector<f64> {
        self.total() - &self.attacks[k]
    }

    pub fn negated(&self) -> Self {
        GameState {
            attacks: self.attacks.iter().map(|a| -a).collect(),
            round: self.round,
        }
    }

    pub fn is_feasible(&self, partition: &AttackPartition) -> bool {
        self.attacks.len() == partition.len()
            && self.attacks.iter().enumerate().all(|(k, a)| partition.is_feasible(k, a))
    }
}

/// Settings of the projected-gradient best-response solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Starting points besides the current strategy.
    pub multistarts: usize,
    pub max_iter: usize,
    /// Step length below which an ascent run stops, relative to `1 + ‖a_k‖`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            multistarts: 8,
            max_iter: 5000,
            tol: 1e-12,
            seed: 0,
        }
    }
}

/// A best response with its utility and the solver status.
#[derive(Clone, Debug)]
pub struct BestResponse {
    /// Full-length vector supported on `C_k`.
    pub a_k: DVector<f64>,
    pub utility: f64,
    /// Every ascent run ended on a small step rather than the iteration cap.
    pub converged: bool,
}

struct Ascent {
    point: DVector<f64>,
    value: f64,
    converged: bool,
}

/// Projected gradient ascent in the coordinates of `C_k`, with Barzilai-Borwein steps and
/// backtracking that only accepts increases.
fn ascend(
    utility: &Utility,
    partition: &AttackPartition,
    k: usize,
    base: &DVector<f64>,
    start: DVector<f64>,
    cfg: &SolverConfig,
) -> Result<Ascent> {
    let eval = |v: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let p = utility.evaluate(&(base + partition.embed(k, v)))?;
        Ok((p.value, partition.restrict(k, &p.gradient)))
    };
    let radius = partition.budget(k).sqrt();
    let mut v = partition.project(k, start);
    let (mut f, mut g) = eval(&v)?;
    let mut step = radius / g.norm().max(f64::MIN_POSITIVE);
    for _ in 0..cfg.max_iter {
        if g.norm() == 0.0 {
            return Ok(Ascent { point: v, value: f, converged: true });
        }
        let mut t = step;
        let mut accepted = None;
        for _ in 0..80 {
            let cand = partition.project(k, &v + &g * t);
            let s = &cand - &v;
            if s.norm() <= cfg.tol * (1.0 + v.norm()) {
                break;
            }
            let (fc, gc) = eval(&cand)?;
            if fc >= f + 1e-4 * g.dot(&s).min(s.norm_squared() / t) {
                accepted = Some((cand, fc, gc, s));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc, gc, s)) = accepted else {
            return Ok(Ascent { point: v, value: f, converged: true });
        };
        let y = &gc - &g;
        let curvature = -s.dot(&y);
        step = if curvature > 0.0 {
            s.norm_squared() / curvature
        } else {
            2.0 * t
        };
        if !step.is_finite() || step <= 0.0 {
            step = t;
        }
        let small = s.norm() <= cfg.tol * (1.0 + cand.norm());
        v = cand;
        f = fc;
        g = gc;
        if small {
            return Ok(Ascent { point: v, value: f, converged: true });
        }
    }
    Ok(Ascent { point: v, value: f, converged: false })
}

/// Leading directions maximizing `aᵀQa / aᵀΣ_YY⁻¹a` over vectors supported on `C_k`,
/// in restricted coordinates, each scaled to unit Mahalanobis length.
fn restricted_directions(utility: &Utility, partition: &AttackPartition, k: usize, count: usize) -> Vec<DVector<f64>> {
    let set = partition.set(k);
    let n = set.len();
    let sub = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| m[(set[i], set[j])]);
    let p = sub(&utility.sigma_yy_inv);
    let q = sub(&utility.q);
    let Some(chol) = p.cholesky() else {
        return Vec::new();
    };
    let l = chol.l();
    let Some(l_inv) = l.clone().try_inverse() else {
        return Vec::new();
    };
    let eig = SortedEigen::new(&symmetrize(&(&l_inv * q * l_inv.transpose())));
    (0..count.min(n))
        .filter(|&i| eig.values[i] > 0.0)
        .map(|i| l_inv.transpose() * eig.vector(i))
        .collect()
}

/// Best response of attacker `k` to the aggregate `a_minus_k` of the others.
///
/// Starts from `current` and from `cfg.multistarts` further points: leading restricted
/// eigen-directions and seeded random directions, each in both signs and oriented by the current
/// aggregate so that `BR(−·)` mirrors `BR(·)` exactly. The returned utility is at least that of
/// `current`.
pub fn best_response(
    model: &MeasurementModel,
    partition: &AttackPartition,
    k: usize,
    a_minus_k: &DVector<f64>,
    current: &DVector<f64>,
    tau: f64,
    cfg: &SolverConfig,
) -> Result<BestResponse> {
    let utility = Utility::new(model, tau)?;
    best_response_with(&utility, partition, k, a_minus_k, current, cfg)
}

fn best_response_with(
    utility: &Utility,
    partition: &AttackPartition,
    k: usize,
    a_minus_k: &DVector<f64>,
    current: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<BestResponse> {
    if k >= partition.len() {
        return Err(Error::Partition(format!("attacker {k} out of range 0..{}", partition.len())));
    }
    utility.check(a_minus_k)?;
    utility.check(current)?;
    if partition.set(k).iter().any(|&i| a_minus_k[i] != 0.0) {
        return Err(Error::Partition(format!("other attackers act on sensors of attacker {k}")));
    }
    let n = partition.set(k).len();
    let radius = partition.budget(k).sqrt();
    let reference = partition.restrict(k, &(a_minus_k + current));

    let pairs = cfg.multistarts.div_ceil(2);
    let mut directions = restricted_directions(utility, partition, k, pairs.div_ceil(2));
    let mut rng = mc::rng(mc::derive_seed(cfg.seed, k as u64));
    while directions.len() < pairs {
        let v = DVector::from_fn(n, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
        let scale = rng.random_range(0.2..1.0) * radius;
        directions.push(v.normalize() * scale);
    }
    // A Mahalanobis length of 2 sits near the peak of the utility along leading directions.
    let mut starts = vec![partition.restrict(k, current)];
    for d in directions {
        let d = if d.dot(&reference) < 0.0 { -d } else { d };
        let norm = d.norm();
        if norm == 0.0 {
            continue;
        }
        let d = if norm > radius { d * (radius / norm) } else { d * 2f64.sqrt() };
        starts.push(d.clone());
        starts.push(-d);
    }
    starts.truncate(cfg.multistarts + 1);

    let mut best: Option<Ascent> = None;
    let mut converged = true;
    for start in starts {
        let run = ascend(utility, partition, k, a_minus_k, start, cfg)?;
        converged &= run.converged;
        if best.as_ref().map_or(true, |b| run.value > b.value) {
            best = Some(run);
        }
    }
    let best = best.expect("current strategy is always a start");
    if !converged {
        log::warn!("best response of attacker {k} hit the iteration cap");
    }
    Ok(BestResponse {
        a_k: partition.embed(k, &best.point),
        utility: best.value,
        converged,
    })
}

/// One best-response update in a trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub round: usize,
    pub attacker: usize,
    /// `φ` of the global attack after the update.
    pub utility: f64,
    /// `‖a‖` of the global attack after the update.
    pub norm: f64,
}

#[derive(Clone, Debug)]
pub struct BrdResult {
    pub trace: Vec<TraceEntry>,
    pub state: GameState,
    pub converged: bool,
}

/// Round-robin best-response dynamics in attacker index order.
///
/// Stops after the first round in which no attacker moves by `tol` or more, after the first
/// round when there is a single attacker, or after `max_rounds`.
pub fn run_brd(
    model: &MeasurementModel,
    partition: &AttackPartition,
    tau: f64,
    init: GameState,
    max_rounds: usize,
    tol: f64,
    cfg: &SolverConfig,
) -> Result<BrdResult> {
    let utility = Utility::new(model, tau)?;
    if !init.is_feasible(partition) || init.attacks.iter().any(|a| a.len() != utility.dim()) {
        return Err(Error::Partition("initial state violates support or budget".into()));
    }
    let mut state = init;
    let mut trace = Vec::new();
    let mut converged = false;
    for round in 1..=max_rounds {
        let mut moved = 0.0f64;
        for k in 0..partition.len() {
            let others = state.others(k);
            let br = best_response_with(&utility, partition, k, &others, &state.attacks[k], cfg)?;
            moved = moved.max((&br.a_k - &state.attacks[k]).norm());
            state.attacks[k] = br.a_k;
            state.round = round;
            let total = state.total();
            trace.push(TraceEntry {
                round,
                attacker: k,
                utility: utility.value(&total)?,
                norm: total.norm(),
            });
        }
        // a lone attacker has nobody to react to after its first response
        if moved < tol || partition.len() == 1 {
            converged = true;
            break;
        }
    }
    Ok(BrdResult {
        trace,
        state,
        converged,
    })
}

/// Per-attacker outcome of the equilibrium check.
#[derive(Clone, Debug)]
pub struct AttackerCheck {
    /// Largest `φ(a_k' + a_{−k}) − φ(a)` over the probes.
    pub best_improvement: f64,
    /// Probe achieving `best_improvement`.
    pub best_probe: DVector<f64>,
    /// `‖P(a_k + ∇_k φ) − a_k‖` with `P` the projection on the feasible set of attacker `k`.
    pub stationarity: f64,
}

#[derive(Clone, Debug)]
pub struct NeReport {
    pub utility: f64,
    pub attackers: Vec<AttackerCheck>,
}

impl NeReport {
    /// No probe improves `φ` by more than `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.attackers.iter().all(|c| c.best_improvement <= tol)
    }

    pub fn max_improvement(&self) -> f64 {
        self.attackers
            .iter()
            .map(|c| c.best_improvement)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Probes `n_probes` feasible unilateral deviations per attacker: half uniform in the budget
/// ball, half local perturbations of the current strategy.
pub fn verify_ne(
    model: &MeasurementModel,
    partition: &AttackPartition,
    state: &GameState,
    tau: f64,
    n_probes: usize,
    seed: u64,
) -> Result<NeReport> {
    let utility = Utility::new(model, tau)?;
    if !state.is_feasible(partition) {
        return Err(Error::Partition("state violates support or budget".into()));
    }
    let total = state.total();
    let base = utility.evaluate(&total)?;
    let mut attackers = Vec::with_capacity(partition.len());
    for k in 0..partition.len() {
        let n = partition.set(k).len();
        let radius = partition.budget(k).sqrt();
        let others = state.others(k);
        let current = partition.restrict(k, &state.attacks[k]);
        let mut rng = mc::rng(mc::derive_seed(seed, k as u64));
        let mut best_improvement = f64::NEG_INFINITY;
        let mut best_probe = current.clone();
        for p in 0..n_probes {
            let dir = DVector::from_fn(n, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .normalize();
            let u: f64 = rng.random();
            let probe = if p % 2 == 0 {
                dir * (radius * u.powf(1.0 / n as f64))
            } else {
                let scale = 1e-3 * (current.norm() + radius * 1e-3);
                partition.project(k, &current + dir * (scale * u))
            };
            let value = utility.value(&(&others + partition.embed(k, &probe)))?;
            let improvement = value - base.value;
            if improvement > best_improvement {
                best_improvement = improvement;
                best_probe = probe;
            }
        }
        let g = partition.restrict(k, &base.gradient);
        let stationarity = (partition.project(k, &current + g) - &current).norm();
        attackers.push(AttackerCheck {
            best_improvement,
            best_probe: partition.embed(k, &best_probe),
            stationarity,
        });
    }
    Ok(NeReport {
        utility: base.value,
        attackers,
    })
}

/// `h(s) = (s/2 − log τ/s) e^{−g²} / (√(2π) erfc(g))` with `g = (s²/2 + log τ)/(√2 s)`.
///
/// Along `a = w Σ_YY^{1/2} u_{G,k}` the stationarity condition `δ(a) = λ_{G,k}` reduces to
/// `h(|w|) = 1`, independently of `k`.
pub fn stationarity_ratio(s: f64, tau: f64) -> f64 {
    let log_tau = tau.ln();
    let g = (0.5 * s * s + log_tau) / (std::f64::consts::SQRT_2 * s);
    let tail = if g >= 0.0 {
        1.0 / erfcx(g)
    } else {
        (-g * g).exp() / erfc(g)
    };
    (0.5 * s - log_tau / s) * tail / SQRT_2PI
}

/// A stationary point `a = w Σ_YY^{1/2} u_{G,k}` of `φ`.
#[derive(Clone, Debug)]
pub struct StationaryPoint {
    pub k: usize,
    pub w: f64,
    pub a: DVector<f64>,
    pub utility: f64,
    pub gradient_norm: f64,
}

#[derive(Clone, Debug)]
pub struct StationarySet {
    pub points: Vec<StationaryPoint>,
    /// Eigen-indices for which the grid showed no sign change.
    pub unresolved: Vec<usize>,
}

/// Log-spaced grid of `count` points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count.max(2) - 1) as f64).exp())
        .collect()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > tol * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Interior stationary points along every eigenvector of `G` with a nonzero eigenvalue.
///
/// Roots of `h(w) = 1` are located by a sign scan over the positive grid `w_grid` and refined by
/// bisection; each root gives the pair `±w`.
pub fn enumerate_stationary_attacks(model: &MeasurementModel, tau: f64, w_grid: &[f64]) -> Result<StationarySet> {
    check_tau(tau)?;
    if w_grid.len() < 2 || w_grid.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::domain("w_grid", w_grid.len() as f64, "at least two positive points"));
    }
    let mut grid = w_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let f = |s: f64| stationarity_ratio(s, tau) - 1.0;
    let mut roots = Vec::new();
    for pair in grid.windows(2) {
        let (fa, fb) = (f(pair[0]), f(pair[1]));
        if fa == 0.0 {
            roots.push(pair[0]);
        } else if (fa > 0.0) != (fb > 0.0) {
            roots.push(bisect(f, pair[0], pair[1], 1e-10));
        }
    }
    let utility = Utility::new(model, tau)?;
    let g = GMatrix::new(model)?;
    let mut points = Vec::new();
    let mut unresolved = Vec::new();
    for k in 0..g.rank() {
        if roots.is_empty() {
            unresolved.push(k);
            continue;
        }
        let dir = g.direction(k);
        for &s in &roots {
            for w in [s, -s] {
                let a = &dir * w;
                let p = utility.evaluate(&a)?;
                points.push(StationaryPoint {
                    k,
                    w,
                    a,
                    utility: p.value,
                    gradient_norm: p.gradient.norm(),
                });
            }
        }
    }
    Ok(StationarySet { points, unresolved })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::detattack::{max_distortion_attack, min_detect_attack_small_tau};
    use crate::detection::prob_not_detected;
    use crate::estimation::tests::two_bus;
    use crate::grid::GridCase;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn random_vec(m: usize, rng: &mut mc::Rng) -> DVector<f64> {
        DVector::from_fn(m, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
    }

    fn fd_gradient(u: &Utility, a: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(a.len(), |i, _| {
            let h = 1e-6 * (1.0 + a[i].abs());
            let mut p = a.clone();
            let mut m = a.clone();
            p[i] += h;
            m[i] -= h;
            (u.value(&p).unwrap() - u.value(&m).unwrap()) / (2.0 * h)
        })
    }

    fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn utility_is_product_of_factors() {
        let model = MeasurementModel::from_case(&cases::ieee14(), 0.3, 10.0).unwrap();
        let mut rng = mc::rng(5);
        for tau in [0.5, 1.0, 2.0] {
            assert_eq!(utility(&model, &DVector::zeros(model.m()), tau).unwrap(), 0.0);
            for _ in 0..100 {
                let a = random_vec(model.m(), &mut rng) * 0.3;
                let phi = utility(&model, &a, tau).unwrap();
                let expected = prob_not_detected(&model, &a, tau).unwrap() * model.excess_distortion(&a).unwrap();
                assert_relative_eq!(phi, expected, max_relative = 1e-12);
                assert_eq!(phi, utility(&model, &(-&a), tau).unwrap());
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let model = MeasurementModel::from_case(&GridCase::random_connected(6, 3, 2), 0.5, 10.0).unwrap();
        let mut rng = mc::rng(9);
        for tau in [0.5, 1.0, 3.0] {
            let u = Utility::new(&model, tau).unwrap();
            for _ in 0..50 {
                let a = random_vec(model.m(), &mut rng) * 0.5;
                let g = u.evaluate(&a).unwrap().gradient;
                assert!(rel(&g, &fd_gradient(&u, &a)) < 1e-5);
            }
        }
    }

    #[test]
    fn partition_validation() {
        assert!(AttackPartition::new(vec![vec![0, 1], vec![2, 3]], vec![1.0, 1.0], 4).is_ok());
        assert!(AttackPartition::new(vec![vec![0, 1], vec![1, 2, 3]], vec![1.0, 1.0], 4).is_err());
        assert!(AttackPartition::new(vec![vec![0, 1], vec![2]], vec![1.0, 1.0], 4).is_err());
        assert!(AttackPartition::new(vec![vec![0, 1, 2, 4]], vec![1.0], 4).is_err());
        assert!(AttackPartition::new(vec![vec![0, 1, 2, 3]], vec![f64::INFINITY], 4).is_err());
        assert!(AttackPartition::parse("0,1;2,x", 1.0, 4).is_err());
        let p = AttackPartition::parse("3, 2;1,0", 2.0, 4).unwrap();
        assert_eq!(p.set(0), &[2, 3]);
        assert_eq!(p.budget(1), 2.0);
    }

    #[test]
    fn potential_property() {
        let model = MeasurementModel::from_case(&GridCase::random_connected(5, 2, 4), 0.2, 10.0).unwrap();
        let m = model.m();
        let sets = vec![(0..3).collect(), (3..7).collect(), (7..m).collect()];
        let part = AttackPartition::new(sets, vec![4.0, 2.0, 1.0], m).unwrap();
        let u = Utility::new(&model, 1.5).unwrap();
        let mut rng = mc::rng(3);
        for _ in 0..50 {
            let mut state = GameState::zero(&part);
            for k in 0..part.len() {
                state.attacks[k] = part.embed(k, &part.project(k, random_vec(part.set(k).len(), &mut rng)));
            }
            let k = rng.random_range(0..part.len());
            let dev = part.embed(k, &part.project(k, random_vec(part.set(k).len(), &mut rng)));
            let mut moved = state.clone();
            moved.attacks[k] = dev.clone();
            let global = u.value(&moved.total()).unwrap() - u.value(&state.total()).unwrap();
            let own = u.value(&(state.others(k) + &dev)).unwrap() - u.value(&(state.others(k) + &state.attacks[k])).unwrap();
            assert!((global - own).abs() <= 1e-12 * (1.0 + global.abs()));
        }
    }

    #[test]
    fn single_attacker_finds_kkt_direction() {
        let model = MeasurementModel::from_case(&cases::three_bus(), 0.4, 10.0).unwrap();
        let tau = 0.8;
        let part = AttackPartition::single(model.m(), 1e6).unwrap();
        let br = best_response(&model, &part, 0, &DVector::zeros(model.m()), &DVector::zeros(model.m()), tau, &SolverConfig::default()).unwrap();
        assert!(br.converged);
        let reference = min_detect_attack_small_tau(&model, 1.0, tau).unwrap().attack.a;
        let cos = br.a_k.dot(&reference).abs() / (br.a_k.norm() * reference.norm());
        assert!(cos > 1.0 - 1e-6, "cos = {cos}");
        let res = brd_single(&model, &part, tau);
        assert!(res.trace.len() <= 2);
    }

    fn brd_single(model: &MeasurementModel, part: &AttackPartition, tau: f64) -> BrdResult {
        run_brd(model, part, tau, GameState::zero(part), 50, 1e-8, &SolverConfig::default()).unwrap()
    }

    #[test]
    fn stationary_scale_matches_max_distortion_attack() {
        // the peak of φ along u_G1 balances distortion against detection
        let model = MeasurementModel::from_case(&cases::three_bus(), 0.4, 10.0).unwrap();
        let set = enumerate_stationary_attacks(&model, 1.0, &log_grid(1e-3, 1e2, 400)).unwrap();
        let top = set.points.iter().find(|p| p.k == 0 && p.w > 0.0).unwrap();
        let lp = prob_not_detected(&model, &top.a, 1.0).unwrap();
        let att = max_distortion_attack(&model, lp, 1.0).unwrap();
        assert!((att.attack.a.norm() - top.a.norm()).abs() < 1e-7 * top.a.norm());
    }

    #[test]
    fn small_budget_shrinks_response() {
        let model = two_bus(1.0);
        let others = DVector::from_vec(vec![0.0, 0.0, 0.3, -0.2]);
        for e in [1e-2, 1e-4, 1e-8] {
            let part = AttackPartition::new(vec![vec![0, 1], vec![2, 3]], vec![e, 1.0], 4).unwrap();
            let br = best_response(&model, &part, 0, &others, &DVector::zeros(4), 1.0, &SolverConfig::default()).unwrap();
            assert!(br.a_k.norm() <= e.sqrt() * (1.0 + 1e-12));
            assert!(part.is_feasible(0, &br.a_k));
        }
    }

    #[test]
    fn two_bus_response_matches_grid_search() {
        let model = two_bus(1.0);
        let tau = 2.0;
        let e = 0.5;
        let part = AttackPartition::new(vec![vec![0, 1], vec![2, 3]], vec![e, e], 4).unwrap();
        let u = Utility::new(&model, tau).unwrap();
        for k in 0..2 {
            let br = best_response(&model, &part, k, &DVector::zeros(4), &DVector::zeros(4), tau, &SolverConfig::default()).unwrap();
            let mut best = 0.0f64;
            for i in 0..=400 {
                for j in 0..720 {
                    let r = e.sqrt() * i as f64 / 400.0;
                    let t = j as f64 * std::f64::consts::PI / 360.0;
                    let v = DVector::from_vec(vec![r * t.cos(), r * t.sin()]);
                    best = best.max(u.value(&part.embed(k, &v)).unwrap());
                }
            }
            assert!(br.utility >= best - 1e-4, "{} vs {best}", br.utility);
            assert!(br.utility <= best + 1e-4);
        }
    }

    #[test]
    fn brd_monotone_and_reaches_ne() {
        for seed in 0..6u64 {
            let case = GridCase::random_connected(4 + seed as usize % 3, 2, seed);
            let model = MeasurementModel::from_case(&case, 0.3, 10.0).unwrap();
            let m = model.m();
            let sets = vec![(0..m / 2).collect(), (m / 2..m).collect()];
            let part = AttackPartition::new(sets, vec![2.0, 3.0], m).unwrap();
            let tau = [0.5, 1.0, 2.0][seed as usize % 3];
            let res = run_brd(&model, &part, tau, GameState::zero(&part), 100, 1e-9, &SolverConfig { seed, ..Default::default() }).unwrap();
            for w in res.trace.windows(2) {
                assert!(w[1].utility >= w[0].utility - 1e-9);
            }
            assert!(res.converged);
            let report = verify_ne(&model, &part, &res.state, tau, 1000, seed).unwrap();
            assert!(report.passes(1e-6), "seed {seed}: {}", report.max_improvement());
            let mirror = verify_ne(&model, &part, &res.state.negated(), tau, 1000, seed).unwrap();
            assert!(mirror.passes(1e-6));
        }
    }

    #[test]
    fn mirrored_init_mirrors_trace() {
        let model = MeasurementModel::from_case(&cases::three_bus(), 0.3, 10.0).unwrap();
        let part = AttackPartition::new(vec![vec![0, 1, 2], vec![3, 4, 5, 6]], vec![1.0, 2.0], 7).unwrap();
        let mut init = GameState::zero(&part);
        init.attacks[0][1] = 0.4;
        init.attacks[1][5] = -0.3;
        let cfg = SolverConfig::default();
        let a = run_brd(&model, &part, 1.2, init.clone(), 20, 1e-9, &cfg).unwrap();
        let b = run_brd(&model, &part, 1.2, init.negated(), 20, 1e-9, &cfg).unwrap();
        assert_eq!(a.state.negated(), b.state);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn zero_state_is_not_an_equilibrium() {
        let model = two_bus(1.0);
        let part = AttackPartition::new(vec![vec![0, 1], vec![2, 3]], vec![1.0, 1.0], 4).unwrap();
        let report = verify_ne(&model, &part, &GameState::zero(&part), 0.5, 1000, 1).unwrap();
        assert!(report.max_improvement() > 1e-12);
        assert!(!report.passes(1e-6));
    }

    #[test]
    fn perturbed_equilibrium_fails() {
        let model = two_bus(1.0);
        let part = AttackPartition::new(vec![vec![0, 1], vec![2, 3]], vec![1.0, 1.0], 4).unwrap();
        let res = run_brd(&model, &part, 1.0, GameState::zero(&part), 100, 1e-10, &SolverConfig::default()).unwrap();
        let mut bad = res.state.clone();
        bad.attacks[0] *= 0.9;
        assert!(!verify_ne(&model, &part, &bad, 1.0, 1000, 2).unwrap().passes(1e-6));
    }

    #[test]
    fn stationary_points_on_small_cases() {
        let grid = log_grid(1e-3, 1e2, 500);
        let model = two_bus(1.0);
        let set = enumerate_stationary_attacks(&model, 2.0, &grid).unwrap();
        assert!(set.points.len() >= 2);
        let u = Utility::new(&model, 2.0).unwrap();
        for p in &set.points {
            assert!(p.gradient_norm < 1e-6, "{p:?}");
            let fd = fd_gradient(&u, &p.a);
            assert!((fd - u.evaluate(&p.a).unwrap().gradient).norm() < 1e-5 * (1.0 + p.utility));
        }
        let three = MeasurementModel::from_case(&cases::three_bus(), 0.2, 10.0).unwrap();
        let set = enumerate_stationary_attacks(&three, 0.7, &grid).unwrap();
        let rank = three.jacobian().rank(1e-10);
        let per_k = set.points.iter().filter(|p| p.k == 0).count();
        assert!(set.points.len() <= per_k * rank);
        assert!(set.unresolved.is_empty());
    }

    #[test]
    fn coarse_grid_reports_unresolved() {
        let set = enumerate_stationary_attacks(&two_bus(1.0), 1.0, &[1e-3, 2e-3]).unwrap();
        assert!(set.points.is_empty());
        assert_eq!(set.unresolved, vec![0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn brd_never_decreases_utility(seed in any::<u64>(), tau in 0.3f64..3.0) {
            let model = MeasurementModel::from_case(&GridCase::random_connected(4, 1, seed), 0.4, 10.0).unwrap();
            let m = model.m();
            let sets = vec![(0..m).step_by(2).collect(), (1..m).step_by(2).collect()];
            let part = AttackPartition::new(sets, vec![1.0, 0.5], m).unwrap();
            let cfg = SolverConfig { multistarts: 4, seed, ..Default::default() };
            let res = run_brd(&model, &part, tau, GameState::zero(&part), 30, 1e-8, &cfg).unwrap();
            for w in res.trace.windows(2) {
                prop_assert!(w[1].utility >= w[0].utility - 1e-9);
            }
            prop_assert!(res.state.is_feasible(&part));
        }
    }
}
