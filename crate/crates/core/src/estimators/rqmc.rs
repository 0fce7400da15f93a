//! Multilevel QMC with `R` independent randomizations per level.

use rand::Rng;

use super::{
    argmax_lowest, check_init, feasible_levels, finish, tent, LevelDiagnostics, MlEstimate,
};
use crate::error::{Error, Result};
use crate::ld::{lms_scramble, Generator, LdConfig, SeqKind, Shift};
use crate::problems::MlProblem;

pub const DEFAULT_REPLICATIONS: usize = 8;

/// Evaluate `Y_level` at sequence indices `a..b` of `cfg`. Lattice points go
/// through the tent transform first.
pub(crate) fn eval_block(
    problem: &dyn MlProblem,
    level: usize,
    cfg: &LdConfig,
    a: u64,
    b: u64,
    out: &mut Vec<f64>,
) -> Result<()> {
    let mut pts = cfg.points(a, b)?;
    if cfg.kind() == SeqKind::Lattice {
        tent(&mut pts.data);
    }
    problem.eval_batch(level, &pts.data, out);
    Ok(())
}

/// Draw `reps` independent randomizations of `generator` for every level,
/// restricted to that level's dimension. Nets get a fresh linear matrix
/// scramble and digital shift each; lattices a random shift.
pub fn rqmc_configs<R: Rng + ?Sized>(
    problem: &dyn MlProblem,
    generator: &Generator,
    reps: usize,
    rng: &mut R,
) -> Result<Vec<Vec<LdConfig>>> {
    (0..problem.num_levels())
        .map(|l| {
            let g = generator.truncate(problem.dim(l))?;
            (0..reps)
                .map(|_| match &g {
                    Generator::Net(net) => {
                        let s = lms_scramble(net, rng);
                        let shift = Shift::random_digital(s.d(), s.t(), rng);
                        LdConfig::new(Generator::Net(s), shift)
                    }
                    Generator::Lattice(_) => {
                        let shift = g.random_shift(rng);
                        LdConfig::new(g.clone(), shift)
                    }
                })
                .collect()
        })
        .collect()
}

/// Replicated multilevel QMC with randomizations drawn from `rng`.
pub fn run_rqmc<R: Rng + ?Sized>(
    problem: &dyn MlProblem,
    budget: f64,
    init: &[u64],
    reps: usize,
    generator: &Generator,
    rng: &mut R,
) -> Result<MlEstimate> {
    if reps == 0 {
        return Err(Error::InvalidParameter(
            "need at least one replication".into(),
        ));
    }
    check_init(problem, budget, init, reps as u64, true)?;
    let configs = rqmc_configs(problem, generator, reps, rng)?;
    run_rqmc_with(problem, budget, init, &configs)
}

/// Replicated multilevel QMC with explicit randomizations: `configs[l][r]`
/// is replication `r` on level `l`.
pub fn run_rqmc_with(
    problem: &dyn MlProblem,
    budget: f64,
    init: &[u64],
    configs: &[Vec<LdConfig>],
) -> Result<MlEstimate> {
    run_rqmc_observed(problem, budget, init, configs, &mut |_| {})
}

fn snapshot(
    problem: &dyn MlProblem,
    mu: &[f64],
    sigma2: &[f64],
    n: &[u64],
    reps: usize,
    history: &[usize],
) -> MlEstimate {
    let diagnostics = mu
        .iter()
        .zip(sigma2)
        .map(|(&mu_hat, &s2)| LevelDiagnostics {
            mu_hat,
            var_hat: s2 / reps as f64,
        })
        .collect();
    let counts = n.iter().map(|&k| k * reps as u64).collect();
    finish(problem, diagnostics, counts, history.to_vec())
}

/// [`run_rqmc_with`], reporting the estimate after every round of evaluations.
pub(crate) fn run_rqmc_observed(
    problem: &dyn MlProblem,
    budget: f64,
    init: &[u64],
    configs: &[Vec<LdConfig>],
    observer: &mut dyn FnMut(&MlEstimate),
) -> Result<MlEstimate> {
    let levels = problem.num_levels();
    if configs.len() != levels {
        return Err(Error::DimensionMismatch {
            expected: levels,
            got: configs.len(),
        });
    }
    let reps = configs[0].len();
    if reps == 0 || configs.iter().any(|c| c.len() != reps) {
        return Err(Error::InvalidParameter(
            "every level needs the same positive number of replications".into(),
        ));
    }
    for (l, c) in configs.iter().enumerate() {
        if c.iter().any(|cfg| cfg.d() < problem.dim(l)) {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(l),
                got: c[0].d(),
            });
        }
    }
    check_init(problem, budget, init, reps as u64, true)?;
    let max_points: Vec<u64> = configs
        .iter()
        .map(|c| c[0].generator.max_points())
        .collect();
    if let Some(l) = (0..levels).find(|&l| init[l] > max_points[l]) {
        return Err(Error::TooManyPoints {
            index: init[l] - 1,
            max: max_points[l],
        });
    }

    let mut sums = vec![vec![0.0f64; reps]; levels];
    let mut n = vec![0u64; levels];
    let mut next = init.to_vec();
    let mut sigma2 = vec![0.0f64; levels];
    let mut mu = vec![0.0f64; levels];
    let mut update: Vec<usize> = (0..levels).collect();
    let mut history = Vec::new();
    let mut y = Vec::new();
    loop {
        for &l in &update {
            for (r, cfg) in configs[l].iter().enumerate() {
                y.clear();
                eval_block(problem, l, cfg, n[l], next[l], &mut y)?;
                sums[l][r] += y.iter().sum::<f64>();
            }
            n[l] = next[l];
            next[l] = 2 * n[l];
            let means: Vec<f64> = sums[l].iter().map(|s| s / n[l] as f64).collect();
            mu[l] = means.iter().sum::<f64>() / reps as f64;
            sigma2[l] = if reps > 1 {
                means.iter().map(|m| (m - mu[l]).powi(2)).sum::<f64>() / (reps - 1) as f64
            } else {
                f64::NAN
            };
        }
        observer(&snapshot(problem, &mu, &sigma2, &n, reps, &history));
        let feasible = feasible_levels(problem, &n, reps as u64, budget, Some(&max_points));
        if feasible.is_empty() {
            break;
        }
        let star = argmax_lowest(&feasible, |l| {
            sigma2[l] / (reps as f64 * n[l] as f64 * problem.cost(l))
        });
        history.push(star);
        update = vec![star];
    }
    Ok(snapshot(problem, &mu, &sigma2, &n, reps, &history))
}
