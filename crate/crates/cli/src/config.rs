//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    Invalid {
        key: &'static str,
        value: String,
        reason: String,
    },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
}

const KEYS: [&str; 17] = [
    "case_path",
    "rho",
    "snr_db",
    "tau",
    "lambda_grid",
    "k_grid",
    "mc_trials",
    "seed",
    "output_dir",
    "d0",
    "l0_prime",
    "partition",
    "budget",
    "max_rounds",
    "tol",
    "probes",
    "ergodic_trials",
];

/// Raw key/value pairs in file order with later overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                text: line.to_string(),
            })?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line: line_no,
                    key: key.to_string(),
                });
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(ConfigError::DuplicateKey {
                    line: line_no,
                    key: key.to_string(),
                });
            }
        }
        Ok(RawConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Replaces the value of `key`.
    pub fn set(&mut self, key: &'static str, value: impl ToString) {
        debug_assert!(KEYS.contains(&key));
        self.values.insert(key.to_string(), value.to_string());
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// Resolved experiment settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub case_path: String,
    pub rho: f64,
    pub snr_db: f64,
    pub tau: f64,
    pub lambda_grid: Vec<f64>,
    pub k_grid: Vec<usize>,
    pub mc_trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub d0: Option<f64>,
    pub l0_prime: Option<f64>,
    pub partition: Option<String>,
    pub budget: f64,
    pub max_rounds: usize,
    pub tol: f64,
    pub probes: usize,
    pub ergodic_trials: usize,
}

fn invalid(key: &'static str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key,
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn parse_value<T: std::str::FromStr>(key: &'static str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| invalid(key, value, e))
}

fn parse_list<T: std::str::FromStr>(key: &'static str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(invalid(key, value, "grid is empty"));
    }
    Ok(items)
}

fn finite(key: &'static str, raw: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, raw, "must be finite"))
    }
}

impl ExperimentConfig {
    pub fn resolve(raw: &RawConfig) -> Result<Self, ConfigError> {
        let text = |key: &'static str, default: &str| raw.get(key).unwrap_or(default).to_string();
        let float = |key: &'static str, default: f64| -> Result<f64, ConfigError> {
            match raw.get(key) {
                Some(v) => finite(key, v, parse_value(key, v)?),
                None => Ok(default),
            }
        };
        let opt_float = |key: &'static str| -> Result<Option<f64>, ConfigError> {
            raw.get(key).map(|v| finite(key, v, parse_value(key, v)?)).transpose()
        };
        let count = |key: &'static str, default: usize| -> Result<usize, ConfigError> {
            raw.get(key).map_or(Ok(default), |v| parse_value(key, v))
        };

        let case_path = raw.get("case_path").ok_or(ConfigError::Missing("case_path"))?.to_string();
        let rho = float("rho", 0.1)?;
        if !(0.0..1.0).contains(&rho) {
            return Err(invalid("rho", &rho.to_string(), "must lie in [0, 1)"));
        }
        let tau = float("tau", 2.0)?;
        if tau <= 0.0 {
            return Err(invalid("tau", &tau.to_string(), "must be positive"));
        }
        let lambda_grid: Vec<f64> = parse_list("lambda_grid", &text("lambda_grid", "1,2,4,8,16,32,64,128"))?;
        if let Some(l) = lambda_grid.iter().find(|l| !(**l >= 1.0 && l.is_finite())) {
            return Err(invalid("lambda_grid", &l.to_string(), "every lambda must be finite and >= 1"));
        }
        let k_grid: Vec<usize> = parse_list("k_grid", &text("k_grid", "50,100,500,1000"))?;
        let mc_trials = count("mc_trials", 100_000)?;
        if mc_trials == 0 {
            return Err(invalid("mc_trials", "0", "must be positive"));
        }
        let seed = raw.get("seed").map_or(Ok(0), |v| parse_value("seed", v))?;
        let d0 = opt_float("d0")?;
        let l0_prime = opt_float("l0_prime")?;
        let budget = float("budget", 10.0)?;
        if budget <= 0.0 {
            return Err(invalid("budget", &budget.to_string(), "must be positive"));
        }
        let tol = float("tol", 1e-9)?;
        Ok(ExperimentConfig {
            case_path,
            rho,
            snr_db: float("snr_db", 10.0)?,
            tau,
            lambda_grid,
            k_grid,
            mc_trials,
            seed,
            output_dir: PathBuf::from(text("output_dir", "out")),
            d0,
            l0_prime,
            partition: raw.get("partition").map(str::to_string),
            budget,
            max_rounds: count("max_rounds", 100)?,
            tol,
            probes: count("probes", 1000)?,
            ergodic_trials: count("ergodic_trials", 1000)?,
        })
    }

    /// Sorted `key=value` lines of every setting that affects results. The output directory is
    /// left out.
    pub fn canonical(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| format!("{x:?}"));
        let mut out = String::new();
        let mut line = |k: &str, v: String| writeln!(out, "{k}={v}").expect("writing to a String");
        line("budget", format!("{:?}", self.budget));
        line("case_path", self.case_path.clone());
        line("d0", opt(self.d0));
        line("ergodic_trials", self.ergodic_trials.to_string());
        line(
            "k_grid",
            self.k_grid.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
        );
        line("l0_prime", opt(self.l0_prime));
        line("lambda_grid", list(&self.lambda_grid));
        line("max_rounds", self.max_rounds.to_string());
        line("mc_trials", self.mc_trials.to_string());
        line("partition", self.partition.clone().unwrap_or_else(|| "none".into()));
        line("probes", self.probes.to_string());
        line("rho", format!("{:?}", self.rho));
        line("seed", self.seed.to_string());
        line("snr_db", format!("{:?}", self.snr_db));
        line("tau", format!("{:?}", self.tau));
        line("tol", format!("{:?}", self.tol));
        out
    }

    /// Hex SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .fold(String::with_capacity(64), |mut s, b| {
                write!(s, "{b:02x}").expect("writing to a String");
                s
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::resolve(&RawConfig::parse(text)?)
    }

    #[test]
    fn parses_with_comments_and_defaults() {
        let cfg = resolve("# test\ncase_path = builtin.m  # trailing\n\nrho=0.9\nlambda_grid = 1, 2 ,4\n").unwrap();
        assert_eq!(cfg.case_path, "builtin.m");
        assert_eq!(cfg.rho, 0.9);
        assert_eq!(cfg.lambda_grid, vec![1.0, 2.0, 4.0]);
        assert_eq!(cfg.tau, 2.0);
        assert_eq!(cfg.snr_db, 10.0);
        assert_eq!(cfg.mc_trials, 100_000);
        assert_eq!(cfg.d0, None);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(resolve("rho = 0.1"), Err(ConfigError::Missing("case_path"))));
        assert!(matches!(resolve("case_path=a\nfoo=1"), Err(ConfigError::UnknownKey { line: 2, .. })));
        assert!(matches!(resolve("case_path=a\nrho"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(matches!(resolve("case_path=a\nrho=1\nrho=2"), Err(ConfigError::DuplicateKey { .. })));
        assert!(resolve("case_path=a\nrho=1.0").is_err());
        assert!(resolve("case_path=a\ntau=0").is_err());
        assert!(resolve("case_path=a\nlambda_grid=").is_err());
        assert!(resolve("case_path=a\nlambda_grid=0.5").is_err());
        assert!(resolve("case_path=a\nseed=-1").is_err());
        assert!(resolve("case_path=a\nsnr_db=nan").is_err());
    }

    #[test]
    fn overrides_and_hash() {
        let mut raw = RawConfig::parse("case_path=a\nseed=1").unwrap();
        let before = ExperimentConfig::resolve(&raw).unwrap();
        raw.set("seed", 2);
        let after = ExperimentConfig::resolve(&raw).unwrap();
        assert_eq!(after.seed, 2);
        assert_ne!(before.hash(), after.hash());
        assert_eq!(before.hash().len(), 64);
        raw.set("output_dir", "elsewhere");
        assert_eq!(ExperimentConfig::resolve(&raw).unwrap().hash(), after.hash());
    }
}
