//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "problem": { "beta": 0.5, "r": 1.0, "m": 512, "noise": 0.5, "seed": 42 },
//!   "shift": { "family": "bounded", "a": 0.5, "alpha": 1.0, "C": 1.0, "sigma": 1.0 },
//!   "filter": { "kind": "tikhonov" },
//!   "schemes": ["unweighted"],
//!   "theorem": "thm4",
//!   "n_grid": [256, 512, 1024],
//!   "trials": 20,
//!   "epsilon": 0.05,
//!   "output": { "results": "results.csv", "plot": "rates.svg" }
//! }
//! ```
//!
//! `scheme` (a single string) is accepted in place of `schemes`. Unknown keys
//! are rejected. `SPECTRAL_SHIFT_SEED` overrides `problem.seed` when loading
//! through [`ExperimentConfig::load`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{contract, Error, Result};
use crate::filters::{FilterKind, FilterSpec};
use crate::shift_weights::{clipping_threshold, ShiftFamily, ShiftSpec, WeightScheme};
use crate::synthetic::{lambda_schedule, make_problem, Schedule, SyntheticProblem, DEFAULT_TRUNCATION};

pub const SEED_ENV: &str = "SPECTRAL_SHIFT_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub shift: ShiftConfig,
    pub filter: FilterConfig,
    #[serde(alias = "scheme", deserialize_with = "one_or_many")]
    pub schemes: Vec<SchemeChoice>,
    pub theorem: Schedule,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub beta: f64,
    pub r: f64,
    #[serde(default = "default_truncation")]
    pub m: usize,
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    None,
    Bounded,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(rename = "C", default = "one")]
    pub c: f64,
    #[serde(default = "one")]
    pub sigma: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterConfig {
    Tikhonov,
    /// Without `t`, the step count follows the λ schedule as `t = round(1/λ)`.
    Landweber {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t: Option<u32>,
    },
    Cutoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    Unweighted,
    Exact,
    Normalized,
    /// Threshold `D_n` from the clipped-weight schedule.
    Clipped,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot: Option<PathBuf>,
}

fn one_or_many<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<SchemeChoice>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(SchemeChoice),
        Many(Vec<SchemeChoice>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

/// Per-cell settings derived from the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPlan {
    pub scheme: WeightScheme,
    pub filter: FilterSpec,
    pub lambda: f64,
}

impl ExperimentConfig {
    /// Parses and validates without consulting the environment.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the seed override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.problem.seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::Contract(format!("{SEED_ENV}={seed:?} is not an unsigned integer")))?;
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        contract!(!self.n_grid.is_empty(), "n_grid is empty");
        contract!(self.n_grid[0] >= 1, "n_grid entries must be positive");
        contract!(
            self.n_grid.windows(2).all(|w| w[0] < w[1]),
            "n_grid must be strictly increasing"
        );
        contract!(self.trials >= 1, "trials must be at least 1");
        contract!(!self.schemes.is_empty(), "no weighting scheme given");
        let mut sorted = self.schemes.clone();
        sorted.sort();
        sorted.dedup();
        contract!(sorted.len() == self.schemes.len(), "schemes are listed twice");
        self.problem()?;
        self.filter_spec_for(1.0)?;
        for &n in &self.n_grid {
            for &s in &self.schemes {
                self.plan(n, s)?;
            }
        }
        Ok(())
    }

    pub fn shift_spec(&self) -> Result<ShiftSpec> {
        let s = &self.shift;
        let family = match s.family {
            FamilyName::None => ShiftFamily::None,
            FamilyName::Bounded => {
                let a = s.a.ok_or_else(|| Error::Contract("bounded shift needs an amplitude a".into()))?;
                ShiftFamily::Bounded { a }
            }
            FamilyName::Log => ShiftFamily::Log,
        };
        if s.family != FamilyName::Bounded {
            contract!(s.a.is_none(), "amplitude a only applies to the bounded family");
        }
        ShiftSpec::new(family, s.alpha, s.c, s.sigma)
    }

    pub fn problem(&self) -> Result<SyntheticProblem> {
        let p = &self.problem;
        Ok(make_problem(p.beta, p.r, p.m, p.noise, self.shift_spec()?)?.with_seed(p.seed))
    }

    fn filter_spec_for(&self, lambda: f64) -> Result<(FilterSpec, f64)> {
        Ok(match self.filter {
            FilterConfig::Tikhonov => (FilterSpec::tikhonov(), lambda),
            FilterConfig::Cutoff => (FilterSpec::spectral_cutoff(), lambda),
            FilterConfig::Landweber { t: Some(t) } => (FilterSpec::new(FilterKind::Landweber { t })?, 1.0 / t as f64),
            FilterConfig::Landweber { t: None } => FilterSpec::landweber_for_lambda(lambda)?,
        })
    }

    /// Scheme, filter and λ for sample size `n`.
    pub fn plan(&self, n: usize, choice: SchemeChoice) -> Result<CellPlan> {
        let p = &self.problem;
        let alpha = self.shift.alpha;
        let lambda = lambda_schedule(self.theorem, n, p.r, p.beta, alpha, self.epsilon)?;
        let scheme = match choice {
            SchemeChoice::Unweighted => WeightScheme::Unweighted,
            SchemeChoice::Exact => WeightScheme::Exact,
            SchemeChoice::Normalized => WeightScheme::Normalized,
            SchemeChoice::Clipped => WeightScheme::Clipped {
                d_n: clipping_threshold(n, p.r, alpha, self.epsilon, p.beta)?,
            },
        };
        let (filter, lambda) = self.filter_spec_for(lambda)?;
        Ok(CellPlan { scheme, filter, lambda })
    }
}
