use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::learners::Algorithm;
use crate::objective::DEFAULT_DELTA;

/// A list of hyperparameter values, written either as an explicit array or
/// as a power range such as `"2^[-10:10]"` (every integer exponent from -10
/// to 10 inclusive).
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Grid(pub Vec<f64>);

impl Grid {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Sorted values with exact duplicates removed.
    pub fn deduplicated(&self) -> Vec<f64> {
        let mut v = self.0.clone();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn single(v: f64) -> Self {
        Grid(vec![v])
    }
}

impl FromStr for Grid {
    type Err = Error;

    /// Comma-separated terms, each a number or a power range `b^[lo:hi]`.
    fn from_str(s: &str) -> Result<Self> {
        let mut values = Vec::new();
        for term in s.split(',').map(str::trim) {
            match term.split_once('^') {
                Some((base, range)) => values.extend(power_range(term, base, range)?),
                None => values.push(
                    term.parse::<f64>()
                        .map_err(|_| Error::config(format!("bad grid value {term:?}")))?,
                ),
            }
        }
        Ok(Grid(values))
    }
}

fn power_range(term: &str, base: &str, range: &str) -> Result<Vec<f64>> {
    let bad = || Error::config(format!("malformed grid range {term:?}"));
    let base: f64 = base.trim().parse().map_err(|_| bad())?;
    let inner = range
        .trim()
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(bad)?;
    let (lo, hi) = inner.split_once(':').ok_or_else(bad)?;
    let lo: i32 = lo.trim().parse().map_err(|_| bad())?;
    let hi: i32 = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi || !(base > 0.0) {
        return Err(bad());
    }
    Ok((lo..=hi).map(|e| base.powi(e)).collect())
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            List(Vec<f64>),
            One(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::List(v) => Ok(Grid(v)),
            Raw::One(v) => Ok(Grid(vec![v])),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<PathBuf>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        One(PathBuf),
        Many(Vec<PathBuf>),
    }
    Ok(match Raw::deserialize(de)? {
        Raw::One(p) => vec![p],
        Raw::Many(v) => v,
    })
}

/// Settings for a benchmark, grid search or tradeoff sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(alias = "dataset", deserialize_with = "one_or_many")]
    pub datasets: Vec<PathBuf>,
    /// Fixed feature dimension for every dataset (inferred when absent).
    pub dimension: Option<usize>,
    pub algorithms: Vec<Algorithm>,
    pub eta_grid: Grid,
    pub lambda_grid: Grid,
    pub theta_grid: Grid,
    pub delta: f64,
    pub folds: usize,
    pub repeats: usize,
    /// Folds used inside grid search.
    pub inner_folds: usize,
    pub seed: u64,
    pub normalize: bool,
    pub output: Option<PathBuf>,
    /// Worker threads (defaults to the available parallelism).
    pub jobs: Option<usize>,
    /// Algorithm the others are t-tested against.
    pub reference: Algorithm,
    pub alpha: f64,
    /// Record wall-clock training times; off keeps output files reproducible.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            dimension: None,
            algorithms: vec![Algorithm::Adaoam],
            eta_grid: "2^[-10:10]".parse().expect("static grid"),
            lambda_grid: "2^[-10:6]".parse().expect("static grid"),
            theta_grid: Grid::single(0.0),
            delta: DEFAULT_DELTA,
            folds: 5,
            repeats: 4,
            inner_folds: 5,
            seed: 0,
            normalize: true,
            output: None,
            jobs: None,
            reference: Algorithm::Adaoam,
            alpha: 0.05,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative dataset paths resolve against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            for p in &mut cfg.datasets {
                if p.is_relative() && !p.exists() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::config("no algorithms selected"));
        }
        if self.folds < 2 || self.inner_folds < 2 {
            return Err(Error::config("folds must be at least 2"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats must be at least 1"));
        }
        for (name, grid) in [("eta", &self.eta_grid), ("lambda", &self.lambda_grid)] {
            if grid.values().is_empty() {
                return Err(Error::config(format!("{name} grid is empty")));
            }
        }
        if self.algorithms.iter().any(|a| a.uses_theta()) && self.theta_grid.values().is_empty() {
            return Err(Error::config("theta grid is empty"));
        }
        let all = self
            .eta_grid
            .values()
            .iter()
            .chain(self.lambda_grid.values())
            .chain(self.theta_grid.values());
        for &v in all {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("grid value {v} must be finite and non-negative")));
            }
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::config("delta must be finite and non-negative"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha must lie in (0, 1)"));
        }
        if self.jobs == Some(0) {
            return Err(Error::config("jobs must be at least 1"));
        }
        Ok(())
    }
}
