//! Subcommand implementations. Each returns the CSV table it produces.

use std::path::Path;

use rayon::prelude::*;

use gridsec::detattack::{
    kkt_certificate, max_distortion_attack, min_detect_attack_large_tau, min_detect_attack_small_tau, ClosedFormAttack,
};
use gridsec::detection::{stealth_threshold, stealth_weights};
use gridsec::ergodic::{ergodic_bound_with_mc, signal_eigenvalues};
use gridsec::estimation::MeasurementModel;
use gridsec::game::{run_brd, verify_ne, AttackPartition, GameState, SolverConfig};
use gridsec::grid::{build_jacobian, parse_any, GridCase};
use gridsec::stealth::{detection_bound_exponent, mutual_information_optimal};
use gridsec::{cases, mc, Error};

use crate::config::{ConfigError, ExperimentConfig};
use crate::table::{Cell, Table};

/// Improvement threshold for the equilibrium check appended to BRD traces.
pub const NE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write output: {0}")]
    Output(#[source] std::io::Error),
    #[error(transparent)]
    Model(#[from] Error),
}

impl CliError {
    /// 1 for configuration problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Output(_) => 1,
            CliError::Model(e) => match e {
                Error::Case(_)
                | Error::DimensionMismatch { .. }
                | Error::Domain { .. }
                | Error::NullAttackOptimal { .. }
                | Error::InfeasibleBox(_)
                | Error::Partition(_)
                | Error::SampleCount { .. } => 1,
                Error::NotPositiveSemidefinite { .. }
                | Error::NotPositiveDefinite
                | Error::NullAttack
                | Error::ZeroJacobian
                | Error::NoSolution(_)
                | Error::NonConvergence { .. } => 2,
            },
        }
    }
}

/// A case file path, or the name of a bundled case when no such file exists.
pub fn load_case(path: &str) -> Result<GridCase, CliError> {
    if Path::new(path).is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read case {path}: {e}")))?;
        return Ok(parse_any(&text).map_err(Error::from)?);
    }
    cases::by_name(path).ok_or_else(|| {
        CliError::Usage(format!(
            "case {path:?} is neither a file nor a bundled case ({})",
            cases::NAMES.join(", ")
        ))
    })
}

fn model(cfg: &ExperimentConfig) -> Result<MeasurementModel, CliError> {
    let case = load_case(&cfg.case_path)?;
    Ok(MeasurementModel::from_case(&case, cfg.rho, cfg.snr_db)?)
}

/// Mutual information, detection probability by quadrature and by Monte Carlo, and the
/// detection upper bound for every `λ`.
///
/// All grid points share one seed: the weights do not depend on `λ`, so common random numbers
/// keep the simulated curve monotone.
pub fn stealth_sweep(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let model = model(cfg)?;
    let rows = cfg
        .lambda_grid
        .par_iter()
        .map(|&lambda| -> Result<Vec<Cell>, CliError> {
            let mi = mutual_information_optimal(&model, lambda)?;
            let weights = stealth_weights(&model, lambda)?;
            let threshold = stealth_threshold(&weights, lambda, cfg.tau);
            let cf = weights.tail_cf(threshold)?;
            let sim = weights.tail_mc(threshold, cfg.mc_trials, cfg.seed);
            let bound = if cfg.tau > 1.0 {
                (-detection_bound_exponent(&weights, cfg.tau, lambda)).exp()
            } else {
                1.0
            };
            Ok(vec![
                lambda.into(),
                mi.into(),
                cf.value.clamp(0.0, 1.0).into(),
                sim.mean.into(),
                sim.std_error.into(),
                bound.into(),
            ])
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = Table::new(&["lambda", "mi_nats", "pd_cf", "pd_mc", "pd_mc_se", "pd_upper_bound"]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

/// Detection upper bound `e^{−t}` against simulated detection for every `λ`; requires `τ > 1`.
pub fn pd_bound(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    if cfg.tau <= 1.0 {
        return Err(CliError::Usage(format!("pd-bound requires tau > 1, got {}", cfg.tau)));
    }
    let model = model(cfg)?;
    let rows = cfg
        .lambda_grid
        .par_iter()
        .map(|&lambda| -> Result<(f64, Vec<Cell>), CliError> {
            let weights = stealth_weights(&model, lambda)?;
            let t = detection_bound_exponent(&weights, cfg.tau, lambda);
            let threshold = stealth_threshold(&weights, lambda, cfg.tau);
            let sim = weights.tail_mc(threshold, cfg.mc_trials, cfg.seed);
            let cf = weights.tail_cf(threshold)?;
            let bound = (-t).exp();
            let ratio = bound / cf.value.max(f64::MIN_POSITIVE);
            Ok((
                ratio,
                vec![
                    lambda.into(),
                    t.into(),
                    bound.into(),
                    sim.mean.into(),
                    sim.std_error.into(),
                    cf.value.clamp(0.0, 1.0).into(),
                ],
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = Table::new(&["lambda", "t", "bound", "pd_mc", "pd_mc_se", "pd_cf"]);
    let mut min_ratio = f64::INFINITY;
    for (ratio, row) in rows {
        min_ratio = min_ratio.min(ratio);
        table.push(row);
    }
    table.note(format!("min_bound_to_pd_ratio={}", crate::table::float(min_ratio)));
    Ok(table)
}

fn non_detection_limit_at_zero(tau: f64) -> f64 {
    match tau.partial_cmp(&1.0) {
        Some(std::cmp::Ordering::Less) => 1.0,
        Some(std::cmp::Ordering::Equal) => 0.5,
        _ => 0.0,
    }
}

fn attack_row(label: &str, sign: &str, status: &str, attack: &ClosedFormAttack, a: &[f64], tau: f64) -> Vec<Cell> {
    let p_nd = attack.p_nd.unwrap_or_else(|| non_detection_limit_at_zero(tau));
    let mut row: Vec<Cell> = vec![
        label.into(),
        sign.into(),
        status.into(),
        p_nd.into(),
        attack.distortion.into(),
        attack.quadratic.into(),
        attack.attack.energy.into(),
    ];
    row.extend(a.iter().map(|&v| Cell::from(v)));
    row
}

/// Closed-form attacks for a distortion target `d0` or a non-detection floor `l0_prime`.
pub fn detattack(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let model = model(cfg)?;
    let m = model.m();
    let mut columns: Vec<String> = ["attack", "sign", "status", "p_nd", "distortion", "mahalanobis", "energy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    columns.extend((0..m).map(|i| format!("a_{i}")));
    let mut table = Table::with_columns(columns);
    let empty = |label: &str, status: &str| -> Vec<Cell> {
        let mut row: Vec<Cell> = vec![label.into(), "".into(), status.into()];
        row.extend((0..4 + m).map(|_| Cell::from("")));
        row
    };
    match (cfg.d0, cfg.l0_prime) {
        (Some(d0), None) => {
            let attack = if cfg.tau <= 1.0 {
                min_detect_attack_small_tau(&model, d0, cfg.tau)?
            } else {
                min_detect_attack_large_tau(&model, d0, cfg.tau)?
            };
            let status = if attack.degenerate { "degenerate" } else { "ok" };
            for (sign, v) in ["+", "-"].iter().zip(attack.pair()) {
                table.push(attack_row("min_detection", sign, status, &attack, v.a.as_slice(), cfg.tau));
            }
            if attack.distortion <= d0 * (1.0 + 1e-9) {
                let cert = kkt_certificate(&model, &attack.attack.a, d0)?;
                table.note(format!(
                    "kkt multiplier={} stationarity={} feasibility={}",
                    crate::table::float(cert.multiplier),
                    crate::table::float(cert.stationarity),
                    crate::table::float(cert.feasibility)
                ));
            }
        }
        (None, Some(l0_prime)) => match max_distortion_attack(&model, l0_prime, cfg.tau) {
            Ok(attack) if attack.attack.energy == 0.0 => {
                table.push(attack_row("max_distortion", "0", "zero attack", &attack, attack.attack.a.as_slice(), cfg.tau));
            }
            Ok(attack) => {
                for (sign, v) in ["+", "-"].iter().zip(attack.pair()) {
                    table.push(attack_row("max_distortion", sign, "ok", &attack, v.a.as_slice(), cfg.tau));
                }
            }
            Err(Error::NoSolution(reason)) => {
                table.push(empty("max_distortion", "no solution exists"));
                table.note(format!("reason={reason}"));
            }
            Err(e) => return Err(e.into()),
        },
        _ => {
            return Err(CliError::Usage(
                "detattack requires exactly one of d0 and l0_prime".into(),
            ))
        }
    }
    Ok(table)
}

/// Best-response dynamics trace followed by the equilibrium check of the terminal state.
pub fn brd(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let model = model(cfg)?;
    let partition = match &cfg.partition {
        Some(spec) => AttackPartition::parse(spec, cfg.budget, model.m())?,
        None => AttackPartition::single(model.m(), cfg.budget)?,
    };
    let solver = SolverConfig {
        seed: cfg.seed,
        ..SolverConfig::default()
    };
    let result = run_brd(
        &model,
        &partition,
        cfg.tau,
        GameState::zero(&partition),
        cfg.max_rounds,
        cfg.tol,
        &solver,
    )?;
    let mut table = Table::new(&["round", "attacker", "utility", "norm"]);
    for e in &result.trace {
        table.push(vec![e.round.into(), e.attacker.into(), e.utility.into(), e.norm.into()]);
    }
    table.note(format!("converged={}", result.converged));
    let report = verify_ne(&model, &partition, &result.state, cfg.tau, cfg.probes, mc::derive_seed(cfg.seed, 1))?;
    for (k, check) in report.attackers.iter().enumerate() {
        table.note(format!(
            "verify_ne attacker={k} best_improvement={} stationarity={}",
            crate::table::float(check.best_improvement),
            crate::table::float(check.stationarity)
        ));
    }
    table.note(format!(
        "verify_ne passes={} tol={}",
        report.passes(NE_TOLERANCE),
        crate::table::float(NE_TOLERANCE)
    ));
    Ok(table)
}

/// Monte Carlo ergodic cost and its upper bound for every training-set size `k`.
pub fn ergodic(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let model = model(cfg)?;
    let p = signal_eigenvalues(&model).len();
    if let Some(k) = cfg.k_grid.iter().find(|&&k| k < p + 1) {
        return Err(CliError::Usage(format!(
            "k = {k} is too small: k - 1 must be at least the signal rank {p}"
        )));
    }
    let rows = cfg
        .k_grid
        .par_iter()
        .enumerate()
        .map(|(i, &k)| -> Result<Vec<Cell>, CliError> {
            let r = ergodic_bound_with_mc(&model, k, cfg.ergodic_trials, mc::derive_seed(cfg.seed, i as u64))?;
            let mc = r.mc_value.expect("requested");
            Ok(vec![
                k.into(),
                mc.mean.into(),
                mc.std_error.into(),
                r.bound_value.into(),
                (r.bound_value - mc.mean).into(),
            ])
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = Table::new(&["k", "mc_cost", "mc_se", "upper_bound", "gap"]);
    rows.into_iter().for_each(|r| table.push(r));
    table.note(format!("p={p}"));
    Ok(table)
}

/// The measurement Jacobian with labelled rows and columns.
pub fn jacobian(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let case = load_case(&cfg.case_path)?;
    let h = build_jacobian(&case);
    let mut columns = vec!["measurement".to_string()];
    columns.extend(h.states.iter().map(|b| format!("theta_{b}")));
    let mut table = Table::with_columns(columns);
    for (i, row) in h.rows.iter().enumerate() {
        let mut cells: Vec<Cell> = vec![row.to_string().into()];
        cells.extend(h.matrix.row(i).iter().map(|&v| Cell::from(v)));
        table.push(cells);
    }
    table.note(format!("case={} slack={}", case.name(), case.slack()));
    Ok(table)
}
