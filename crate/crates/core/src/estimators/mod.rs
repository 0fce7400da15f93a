//! Multilevel estimators driven by iterative doubling: independent Monte
//! Carlo, replicated randomized QMC, and Bayesian QMC with one randomization
//! per level.
//!
//! All three share the same outer loop. Each level starts from its initial
//! sample size; afterwards exactly one level doubles per iteration, chosen
//! among the levels whose doubling still fits in the budget. Levels are
//! 0-based.

mod bqmc;
mod mc;
mod rqmc;

pub use bqmc::{
    bqmc_configs, level_select_bqmc, run_bqmc, run_bqmc_with, PowerTable, VarianceForecast,
};
pub use mc::run_mc;
pub use rqmc::{rqmc_configs, run_rqmc, run_rqmc_with, DEFAULT_REPLICATIONS};

pub(crate) use bqmc::run_bqmc_observed;
pub(crate) use mc::run_mc_observed;
pub(crate) use rqmc::run_rqmc_observed;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::MlProblem;

/// Default initial sample size on every level.
pub const DEFAULT_INIT: u64 = 64;

/// Per-level summary returned with an estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagnostics {
    /// Estimate of `E[Y_level]`.
    pub mu_hat: f64,
    /// This level's contribution to the squared standard error.
    pub var_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlEstimate {
    pub nu_hat: f64,
    pub std_err: f64,
    /// Evaluations per level, replications included.
    pub n_per_level: Vec<u64>,
    /// `sum_l n_per_level[l] * C_l`.
    pub evals_total_cost: f64,
    pub diagnostics: Vec<LevelDiagnostics>,
    /// Level doubled at each iteration after initialization.
    pub history: Vec<usize>,
}

/// `[DEFAULT_INIT; levels]`.
pub fn default_init(levels: usize) -> Vec<u64> {
    vec![DEFAULT_INIT; levels]
}

/// Validate initial sizes and return the cost of the first round.
fn check_init(
    problem: &dyn MlProblem,
    budget: f64,
    init: &[u64],
    reps: u64,
    pow2: bool,
) -> Result<f64> {
    let l = problem.num_levels();
    if init.len() != l {
        return Err(Error::DimensionMismatch {
            expected: l,
            got: init.len(),
        });
    }
    for &n in init {
        if n == 0 || (pow2 && !n.is_power_of_two()) {
            return Err(Error::InvalidParameter(format!(
                "initial size {n} must be {}",
                if pow2 {
                    "a positive power of two"
                } else {
                    "positive"
                }
            )));
        }
    }
    if (0..l).any(|k| !(problem.cost(k) > 0.0)) {
        return Err(Error::InvalidParameter(
            "level costs must be positive".into(),
        ));
    }
    let needed = reps as f64
        * (0..l)
            .map(|k| init[k] as f64 * problem.cost(k))
            .sum::<f64>();
    if !(budget > 0.0) || needed > budget {
        return Err(Error::BudgetTooSmall { budget, needed });
    }
    Ok(needed)
}

/// Levels whose doubling keeps the total within budget (and within the
/// sequence length, when `max_points` is given).
fn feasible_levels(
    problem: &dyn MlProblem,
    n: &[u64],
    reps: u64,
    budget: f64,
    max_points: Option<&[u64]>,
) -> Vec<usize> {
    let spent = spent(problem, n, reps);
    (0..n.len())
        .filter(|&l| spent + reps as f64 * problem.cost(l) * n[l] as f64 <= budget)
        .filter(|&l| max_points.map_or(true, |m| 2 * n[l] <= m[l]))
        .collect()
}

fn spent(problem: &dyn MlProblem, n: &[u64], reps: u64) -> f64 {
    reps as f64
        * n.iter()
            .enumerate()
            .map(|(l, &k)| problem.cost(l) * k as f64)
            .sum::<f64>()
}

/// Index of the largest utility, lowest level on ties.
fn argmax_lowest(levels: &[usize], utility: impl Fn(usize) -> f64) -> usize {
    let mut best = levels[0];
    let mut best_u = utility(best);
    for &l in &levels[1..] {
        let u = utility(l);
        if u > best_u || (best_u.is_nan() && !u.is_nan()) {
            best = l;
            best_u = u;
        }
    }
    best
}

fn finish(
    problem: &dyn MlProblem,
    diagnostics: Vec<LevelDiagnostics>,
    n_per_level: Vec<u64>,
    history: Vec<usize>,
) -> MlEstimate {
    let nu_hat = diagnostics.iter().map(|d| d.mu_hat).sum();
    let std_err = diagnostics.iter().map(|d| d.var_hat).sum::<f64>().sqrt();
    let evals_total_cost = spent(problem, &n_per_level, 1);
    MlEstimate {
        nu_hat,
        std_err,
        n_per_level,
        evals_total_cost,
        diagnostics,
        history,
    }
}

/// `1 - |2x - 1|`, applied coordinate-wise.
pub fn tent(x: &mut [f64]) {
    for v in x {
        *v = 1.0 - (2.0 * *v - 1.0).abs();
    }
}
