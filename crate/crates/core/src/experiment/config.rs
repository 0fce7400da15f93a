//! TOML experiment description.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpOptions;
use crate::kernels::KernelFamily;
use crate::ld::SeqKind;

/// Estimation algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mc,
    Rqmc,
    Bqmc,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::Rqmc => "rqmc",
            Method::Bqmc => "bqmc",
        }
    }

    /// The sequence label used in records: `iid` for Monte Carlo.
    pub fn sequence_label(self, seq: SeqKind) -> &'static str {
        match self {
            Method::Mc => "iid",
            _ => seq.as_str(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(Method::Mc),
            "rqmc" => Ok(Method::Rqmc),
            "bqmc" => Ok(Method::Bqmc),
            _ => Err(Error::Unknown {
                kind: "method",
                name: s.to_string(),
            }),
        }
    }
}

/// Initial sample sizes: one value for every level, or one per level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitSizes {
    Uniform(u64),
    PerLevel(Vec<u64>),
}

impl InitSizes {
    pub fn resolve(&self, levels: usize) -> Vec<u64> {
        match self {
            InitSizes::Uniform(n) => vec![*n; levels],
            InitSizes::PerLevel(v) => v.clone(),
        }
    }
}

impl Default for InitSizes {
    fn default() -> Self {
        InitSizes::Uniform(crate::estimators::DEFAULT_INIT)
    }
}

/// An assertion evaluated against the summary in `--check` mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// Fitted log2-log2 slope of the median error against the budget.
    Slope {
        method: Method,
        #[serde(default)]
        sequence: Option<SeqKind>,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
        #[serde(default)]
        min_budget: Option<f64>,
        #[serde(default)]
        max_budget: Option<f64>,
    },
    /// Fraction of trials with `|error| <= 2 stderr`, pooled over budgets
    /// `>= min_budget`.
    Coverage {
        method: Method,
        #[serde(default)]
        sequence: Option<SeqKind>,
        #[serde(default)]
        min_budget: Option<f64>,
        min: f64,
    },
    /// `median error(method) <= factor * median error(other)` at `budget`
    /// (default: the largest budget).
    MedianErrorLe {
        method: Method,
        other: Method,
        #[serde(default)]
        sequence: Option<SeqKind>,
        #[serde(default)]
        budget: Option<f64>,
        #[serde(default = "one")]
        factor: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_methods() -> Vec<Method> {
    vec![Method::Mc, Method::Rqmc, Method::Bqmc]
}

fn default_sequences() -> Vec<SeqKind> {
    vec![SeqKind::Net]
}

fn default_trials() -> usize {
    250
}

fn default_replications() -> usize {
    crate::estimators::DEFAULT_REPLICATIONS
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub problem: String,
    /// Dimension of single-level problems (default 32).
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_sequences")]
    pub sequences: Vec<SeqKind>,
    /// Total cost budgets, in units of one finest-level evaluation.
    pub budgets: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: InitSizes,
    /// Kernel for BQMC; defaults to `si1` on lattices and `dsi` on nets.
    #[serde(default)]
    pub kernel: Option<KernelFamily>,
    /// Optional generator files overriding the embedded defaults.
    #[serde(default)]
    pub lattice_file: Option<PathBuf>,
    #[serde(default)]
    pub net_file: Option<PathBuf>,
    /// Directory for `records.csv` and `summary.json`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub gp: GpOptions,
    #[serde(default, rename = "check")]
    pub checks: Vec<Check>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file. Relative paths inside it are resolved against the
    /// file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.lattice_file, &mut cfg.net_file, &mut cfg.output]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.budgets.is_empty() || self.budgets.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::Config(
                "budgets must be a nonempty list of positive numbers".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.sequences.is_empty() && self.methods.iter().any(|m| *m != Method::Mc) {
            return Err(Error::Config(
                "QMC methods need at least one sequence".into(),
            ));
        }
        if self.methods.contains(&Method::Rqmc) && self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if let Some(k) = self.kernel {
            if self.methods.contains(&Method::Bqmc)
                && self.sequences.iter().any(|s| *s != k.seq_kind())
            {
                return Err(Error::Config(format!(
                    "kernel {k} does not match every sequence"
                )));
            }
        }
        Ok(())
    }

    /// BQMC kernel for the given sequence.
    pub fn kernel_for(&self, seq: SeqKind) -> KernelFamily {
        self.kernel
            .unwrap_or_else(|| KernelFamily::default_for(seq))
    }
}
