//! Grid topology and the DC measurement Jacobian.
//!
//! A [`GridCase`] holds buses, reactive branches and a slack bus. Two text formats are read:
//!
//! * the native line format
//!
//!   ```text
//!   case two_bus
//!   bus 0
//!   bus 1
//!   branch 0 1 1.0   # from to reactance (p.u.)
//!   slack 0
//!   ```
//!
//! * the bus and branch tables of a MATPOWER case file (`mpc.bus = [...]`, `mpc.branch = [...]`),
//!   from which only bus ids, the reference bus, branch endpoints, reactances and the in-service
//!   status are taken.
//!
//! [`build_jacobian`] turns a case into the linearized map from non-slack bus angles to power
//! injections at every bus and power flows on every branch in both directions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use thiserror::Error;

use crate::mc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    /// Series reactance in per unit, strictly positive.
    pub reactance: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("bus {0} is declared more than once")]
    DuplicateBus(BusId),
    #[error("branch {from}-{to} references unknown bus {missing}")]
    UnknownBus {
        from: BusId,
        to: BusId,
        missing: BusId,
    },
    #[error("branch {0}-{0} is a self-loop")]
    SelfLoop(BusId),
    #[error("non-positive reactance {reactance} on branch {from}-{to}")]
    NonPositiveReactance {
        from: BusId,
        to: BusId,
        reactance: f64,
    },
    #[error("unknown slack bus {0}")]
    UnknownSlack(BusId),
    #[error("no slack bus specified")]
    MissingSlack,
    #[error("case has no buses")]
    NoBuses,
    #[error("grid is disconnected: {reached} of {total} buses reachable from the slack bus")]
    Disconnected { reached: usize, total: usize },
    #[error("malformed MATPOWER case: {0}")]
    Matpower(String),
}

/// Validated grid topology. Buses are kept sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCase {
    name: String,
    buses: Vec<BusId>,
    branches: Vec<Branch>,
    slack: BusId,
}

impl GridCase {
    pub fn new(
        name: impl Into<String>,
        buses: impl IntoIterator<Item = BusId>,
        branches: Vec<Branch>,
        slack: BusId,
    ) -> Result<Self, CaseError> {
        let mut set = BTreeSet::new();
        for b in buses {
            if !set.insert(b) {
                return Err(CaseError::DuplicateBus(b));
            }
        }
        if set.is_empty() {
            return Err(CaseError::NoBuses);
        }
        for br in &branches {
            if br.from == br.to {
                return Err(CaseError::SelfLoop(br.from));
            }
            for end in [br.from, br.to] {
                if !set.contains(&end) {
                    return Err(CaseError::UnknownBus {
                        from: br.from,
                        to: br.to,
                        missing: end,
                    });
                }
            }
            if !(br.reactance > 0.0) || !br.reactance.is_finite() {
                return Err(CaseError::NonPositiveReactance {
                    from: br.from,
                    to: br.to,
                    reactance: br.reactance,
                });
            }
        }
        if !set.contains(&slack) {
            return Err(CaseError::UnknownSlack(slack));
        }
        let case = GridCase {
            name: name.into(),
            buses: set.into_iter().collect(),
            branches,
            slack,
        };
        let reached = case.reachable_from_slack();
        if reached != case.buses.len() {
            return Err(CaseError::Disconnected {
                reached,
                total: case.buses.len(),
            });
        }
        Ok(case)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn buses(&self) -> &[BusId] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn slack(&self) -> BusId {
        self.slack
    }

    /// Number of measurements `|buses| + 2 |branches|`.
    pub fn measurement_count(&self) -> usize {
        self.buses.len() + 2 * self.branches.len()
    }

    /// Number of state variables `|buses| - 1`.
    pub fn state_count(&self) -> usize {
        self.buses.len() - 1
    }

    fn index(&self) -> BTreeMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, &b)| (b, i)).collect()
    }

    fn reachable_from_slack(&self) -> usize {
        let index = self.index();
        let mut adj = vec![Vec::new(); self.buses.len()];
        for br in &self.branches {
            let (i, j) = (index[&br.from], index[&br.to]);
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.buses.len()];
        let start = index[&self.slack];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count
    }

    /// Random connected case on buses `0..n` with slack 0: a random spanning tree plus
    /// `extra` additional branches, reactances uniform in `[0.05, 0.5]`.
    pub fn random_connected(n: usize, extra: usize, seed: u64) -> Self {
        assert!(n >= 2, "a random case needs at least two buses");
        let mut rng = mc::rng(seed);
        let mut order: Vec<u32> = (1..n as u32).collect();
        order.shuffle(&mut rng);
        let mut placed = vec![0u32];
        let mut branches = Vec::new();
        let reactance = |rng: &mut mc::Rng| 0.05 + 0.45 * rng.random::<f64>();
        for b in order {
            let parent = placed[rng.random_range(0..placed.len())];
            branches.push(Branch {
                from: BusId(parent),
                to: BusId(b),
                reactance: reactance(&mut rng),
            });
            placed.push(b);
        }
        for _ in 0..extra {
            let i = rng.random_range(0..n as u32);
            let mut j = rng.random_range(0..n as u32);
            while j == i {
                j = rng.random_range(0..n as u32);
            }
            branches.push(Branch {
                from: BusId(i),
                to: BusId(j),
                reactance: reactance(&mut rng),
            });
        }
        GridCase::new(
            format!("random{n}_{seed}"),
            (0..n as u32).map(BusId),
            branches,
            BusId(0),
        )
        .expect("random spanning-tree construction is always valid")
    }

    /// Renders the case in the native line format accepted by [`parse_case`].
    pub fn to_case_text(&self) -> String {
        let mut out = format!("case {}\n", self.name);
        for b in &self.buses {
            out.push_str(&format!("bus {b}\n"));
        }
        for br in &self.branches {
            out.push_str(&format!("branch {} {} {}\n", br.from, br.to, br.reactance));
        }
        out.push_str(&format!("slack {}\n", self.slack));
        out
    }
}

/// Parses a case in either supported format, choosing MATPOWER when the text contains
/// an `mpc.bus` table.
pub fn parse_any(text: &str) -> Result<GridCase, CaseError> {
    if text.contains("mpc.bus") {
        parse_matpower(text)
    } else {
        parse_case(text)
    }
}

/// Parses the native line format.
pub fn parse_case(text: &str) -> Result<GridCase, CaseError> {
    let mut name: Option<String> = None;
    let mut buses = Vec::new();
    let mut branches = Vec::new();
    let mut slack = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<(usize, &str)> = tokenize(content);
        let Some(&(col, keyword)) = tokens.first() else {
            continue;
        };
        let syntax = |column: usize, message: String| CaseError::Syntax {
            line,
            column,
            message,
        };
        let expect_args = |n: usize| {
            if tokens.len() != n + 1 {
                Err(syntax(
                    col,
                    format!("`{keyword}` takes {n} argument(s), found {}", tokens.len() - 1),
                ))
            } else {
                Ok(())
            }
        };
        let bus_arg = |i: usize| -> Result<BusId, CaseError> {
            let (c, t) = tokens[i];
            t.parse::<u32>()
                .map(BusId)
                .map_err(|_| syntax(c, format!("invalid bus id `{t}`")))
        };
        if name.is_none() && keyword != "case" {
            return Err(syntax(col, "expected `case <name>` header".into()));
        }
        match keyword {
            "case" => {
                if name.is_some() {
                    return Err(syntax(col, "duplicate `case` header".into()));
                }
                expect_args(1)?;
                name = Some(tokens[1].1.to_string());
            }
            "bus" => {
                expect_args(1)?;
                buses.push(bus_arg(1)?);
            }
            "branch" => {
                expect_args(3)?;
                let from = bus_arg(1)?;
                let to = bus_arg(2)?;
                let (c, t) = tokens[3];
                let reactance = t
                    .parse::<f64>()
                    .map_err(|_| syntax(c, format!("invalid reactance `{t}`")))?;
                branches.push(Branch {
                    from,
                    to,
                    reactance,
                });
            }
            "slack" => {
                expect_args(1)?;
                if slack.is_some() {
                    return Err(syntax(col, "duplicate `slack` line".into()));
                }
                slack = Some(bus_arg(1)?);
            }
            other => return Err(syntax(col, format!("unknown keyword `{other}`"))),
        }
    }
    let name = name.ok_or(CaseError::Syntax {
        line: 1,
        column: 1,
        message: "empty case file".into(),
    })?;
    let slack = slack.ok_or(CaseError::MissingSlack)?;
    GridCase::new(name, buses, branches, slack)
}

fn tokenize(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

const MATPOWER_REF_BUS: f64 = 3.0;
const MATPOWER_ISOLATED_BUS: f64 = 4.0;

/// Reads the bus and branch tables of a MATPOWER case file.
///
/// Isolated buses (type 4) and out-of-service branches are dropped. The reference bus
/// (type 3) becomes the slack bus.
pub fn parse_matpower(text: &str) -> Result<GridCase, CaseError> {
    let name = text
        .lines()
        .find_map(|l| {
            let l = l.trim();
            l.strip_prefix("function")
                .and_then(|rest| rest.split('=').nth(1))
                .map(|n| n.trim().to_string())
        })
        .unwrap_or_else(|| "matpower".to_string());

    let bus_rows = matpower_table(text, "bus")?;
    let branch_rows = matpower_table(text, "branch")?;

    let mut buses = Vec::new();
    let mut isolated = BTreeSet::new();
    let mut slack = None;
    for row in &bus_rows {
        if row.len() < 2 {
            return Err(CaseError::Matpower("bus row needs at least 2 columns".into()));
        }
        let id = as_bus_id(row[0])?;
        if row[1] == MATPOWER_ISOLATED_BUS {
            isolated.insert(id);
            continue;
        }
        if row[1] == MATPOWER_REF_BUS && slack.is_none() {
            slack = Some(id);
        }
        buses.push(id);
    }
    let mut branches = Vec::new();
    for row in &branch_rows {
        if row.len() < 4 {
            return Err(CaseError::Matpower("branch row needs at least 4 columns".into()));
        }
        let in_service = row.get(10).map_or(true, |&s| s != 0.0);
        let from = as_bus_id(row[0])?;
        let to = as_bus_id(row[1])?;
        if !in_service || isolated.contains(&from) || isolated.contains(&to) {
            continue;
        }
        branches.push(Branch {
            from,
            to,
            reactance: row[3],
        });
    }
    let slack = slack.ok_or(CaseError::MissingSlack)?;
    GridCase::new(name, buses, branches, slack)
}

fn as_bus_id(v: f64) -> Result<BusId, CaseError> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(BusId(v as u32))
    } else {
        Err(CaseError::Matpower(format!("invalid bus id {v}")))
    }
}

fn matpower_table(text: &str, table: &str) -> Result<Vec<Vec<f64>>, CaseError> {
    let stripped: String = text
        .lines()
        .map(|l| l.split('%').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n");
    let key = format!("mpc.{table}");
    let start = stripped
        .match_indices(&key)
        .find(|(i, _)| {
            let rest = &stripped[i + key.len()..];
            rest.trim_start().starts_with('=')
        })
        .map(|(i, _)| i + key.len())
        .ok_or_else(|| CaseError::Matpower(format!("missing `{key}` table")))?;
    let rest = &stripped[start..];
    let open = rest
        .find('[')
        .ok_or_else(|| CaseError::Matpower(format!("`{key}` has no opening bracket")))?;
    let close = rest[open..]
        .find(']')
        .ok_or_else(|| CaseError::Matpower(format!("`{key}` has no closing bracket")))?;
    let body = &rest[open + 1..open + close];
    let mut rows = Vec::new();
    for chunk in body.split([';', '\n']) {
        let values: Result<Vec<f64>, _> = chunk
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect();
        let values =
            values.map_err(|e| CaseError::Matpower(format!("bad number in `{key}`: {e}")))?;
        if !values.is_empty() {
            rows.push(values);
        }
    }
    Ok(rows)
}

/// Label of one measurement row of the Jacobian.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measurement {
    Injection(BusId),
    Flow { from: BusId, to: BusId },
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measurement::Injection(b) => write!(f, "injection@{b}"),
            Measurement::Flow { from, to } => write!(f, "flow {from}->{to}"),
        }
    }
}

/// DC measurement Jacobian with its row and column labels.
#[derive(Clone, Debug)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    pub rows: Vec<Measurement>,
    pub states: Vec<BusId>,
}

impl Jacobian {
    pub fn measurements(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn states(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Builds the DC Jacobian: injection rows for every bus (in id order), then for every branch
/// the flow from→to followed by the flow to→from. The slack angle column is removed.
pub fn build_jacobian(case: &GridCase) -> Jacobian {
    let index = case.index();
    let nb = case.buses.len();
    let slack = index[&case.slack];
    let column = |bus: usize| -> Option<usize> {
        match bus.cmp(&slack) {
            std::cmp::Ordering::Less => Some(bus),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(bus - 1),
        }
    };
    let m = case.measurement_count();
    let mut h = DMatrix::zeros(m, nb - 1);
    let mut rows: Vec<Measurement> = case.buses.iter().map(|&b| Measurement::Injection(b)).collect();

    for (k, br) in case.branches.iter().enumerate() {
        let (i, j) = (index[&br.from], index[&br.to]);
        let b = 1.0 / br.reactance;
        let forward = nb + 2 * k;
        for (row, at, sign) in [
            (i, i, 1.0),
            (i, j, -1.0),
            (j, j, 1.0),
            (j, i, -1.0),
            (forward, i, 1.0),
            (forward, j, -1.0),
            (forward + 1, j, 1.0),
            (forward + 1, i, -1.0),
        ] {
            if let Some(c) = column(at) {
                h[(row, c)] += sign * b;
            }
        }
        rows.push(Measurement::Flow {
            from: br.from,
            to: br.to,
        });
        rows.push(Measurement::Flow {
            from: br.to,
            to: br.from,
        });
    }
    let states = case
        .buses
        .iter()
        .copied()
        .filter(|&b| b != case.slack)
        .collect();
    Jacobian {
        matrix: h,
        rows,
        states,
    }
}
