//! Access sequence generators. Keys are in `1..=n` and every sequence is a function of
//! its parameters and seed.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub enum Workload {
    Sequential,
    Uniform,
    Zipf(f64),
    /// Accesses mostly hit a drifting set of `w` keys.
    WorkingSet(usize),
    AlternatingExtremes,
    /// One decimal key per line.
    File(PathBuf),
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("unknown workload `{0}`")]
    Unknown(String),
    #[error("bad workload parameter: {0}")]
    BadParam(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: `{text}` is not a key")]
    Parse { line: usize, text: String },
    #[error("key {key} is outside 1..={n}")]
    OutOfRange { key: u64, n: usize },
}

/// Chance that a working-set access stays inside the current set.
const WORKING_SET_HIT: f64 = 0.9;

impl Workload {
    /// The first `m` accesses on keys `1..=n`. A file workload is cut to `m` keys when longer.
    pub fn generate(&self, n: usize, m: usize, seed: u64) -> Result<Vec<u64>, WorkloadError> {
        if n == 0 {
            return Err(WorkloadError::BadParam("n must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let top = n as u64;
        let keys = match self {
            Workload::Sequential => (0..m as u64).map(|i| i % top + 1).collect(),
            Workload::Uniform => (0..m).map(|_| rng.random_range(1..=top)).collect(),
            Workload::Zipf(theta) => {
                let z = Zipf::new(n as f64, *theta).map_err(|e| WorkloadError::BadParam(format!("zipf: {e}")))?;
                (0..m).map(|_| z.sample(&mut rng) as u64).collect()
            }
            Workload::WorkingSet(w) => {
                if *w == 0 || *w > n {
                    return Err(WorkloadError::BadParam(format!("working set size {w} not in 1..={n}")));
                }
                let mut set: Vec<u64> = (1..=*w as u64).collect();
                (0..m)
                    .map(|_| {
                        let slot = rng.random_range(0..set.len());
                        if rng.random_bool(WORKING_SET_HIT) {
                            set[slot]
                        } else {
                            set[slot] = rng.random_range(1..=top);
                            set[slot]
                        }
                    })
                    .collect()
            }
            Workload::AlternatingExtremes => (0..m).map(|i| if i % 2 == 0 { 1 } else { top }).collect(),
            Workload::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| WorkloadError::Io { path: path.clone(), source })?;
                let mut keys = parse_keys(&text)?;
                keys.truncate(m);
                keys
            }
        };
        if let Some(&key) = keys.iter().find(|&&k| k == 0 || k > top) {
            return Err(WorkloadError::OutOfRange { key, n });
        }
        Ok(keys)
    }
}

/// Parses one decimal key per line; blank lines are skipped.
pub fn parse_keys(text: &str) -> Result<Vec<u64>, WorkloadError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.trim().parse().map_err(|_| WorkloadError::Parse { line: i + 1, text: l.to_string() }))
        .collect()
}

fn arg<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    let rest = s.strip_prefix(name)?;
    rest.strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .or_else(|| rest.strip_prefix(':'))
        .or_else(|| rest.strip_prefix('='))
}

impl FromStr for Workload {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |what: &str| WorkloadError::BadParam(format!("{what} in `{s}`"));
        match s {
            "sequential" => return Ok(Workload::Sequential),
            "uniform" => return Ok(Workload::Uniform),
            "alternating_extremes" => return Ok(Workload::AlternatingExtremes),
            _ => {}
        }
        if let Some(a) = arg(s, "zipf") {
            let theta: f64 = a.parse().map_err(|_| bad("zipf exponent"))?;
            if !(theta >= 0.0 && theta.is_finite()) {
                return Err(bad("zipf exponent"));
            }
            return Ok(Workload::Zipf(theta));
        }
        if let Some(a) = arg(s, "working_set") {
            return Ok(Workload::WorkingSet(a.parse().map_err(|_| bad("working set size"))?));
        }
        if let Some(a) = arg(s, "file") {
            return Ok(Workload::File(PathBuf::from(a)));
        }
        Err(WorkloadError::Unknown(s.to_string()))
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Workload::Sequential => write!(f, "sequential"),
            Workload::Uniform => write!(f, "uniform"),
            Workload::Zipf(t) => write!(f, "zipf({t})"),
            Workload::WorkingSet(w) => write!(f, "working_set({w})"),
            Workload::AlternatingExtremes => write!(f, "alternating_extremes"),
            Workload::File(p) => write!(f, "file({})", p.display()),
        }
    }
}
