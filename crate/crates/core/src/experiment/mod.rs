//! Configuration-driven trial harness.
//!
//! Every trial draws its randomness from the stream keyed by
//! `(seed, problem, method, sequence, trial)`, so the records of one trial do
//! not depend on which other trials or budgets are run, nor on the thread
//! that ran it. Budgets share the trial's stream. For single-level problems
//! the doubling path does not depend on the budget, so one run at the largest
//! budget yields the result for every smaller budget.

mod config;
mod summary;

pub use config::{Check, ExperimentConfig, InitSizes, Method};
pub use summary::{
    emit_csv, emit_json, evaluate_checks, fit_slope, median, summarize, write_outputs, CellSummary,
    CheckOutcome, SlopeSummary, Summary, TrialRecord, CSV_COLUMNS,
};

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    bqmc_configs, rqmc_configs, run_bqmc_observed, run_mc_observed, run_rqmc_observed, MlEstimate,
};
use crate::ld::{default_lattice, default_net, parse_ld_data, Generator, LdData, SeqKind};
use crate::problems::{problem_by_name, MlProblem};
use crate::rng::StreamKey;

/// Records and summary of one experiment.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
    pub checks: Vec<CheckOutcome>,
}

/// The generator configured for `kind`: a file from the config or the
/// embedded default.
pub fn generator_for(cfg: &ExperimentConfig, kind: SeqKind) -> Result<Generator> {
    let file = match kind {
        SeqKind::Lattice => &cfg.lattice_file,
        SeqKind::Net => &cfg.net_file,
    };
    Ok(match (file, kind) {
        (Some(path), _) => match parse_ld_data(path, kind)? {
            LdData::Lattice(g) => Generator::Lattice(g),
            LdData::Net(g) => Generator::Net(g),
        },
        (None, SeqKind::Lattice) => Generator::Lattice(default_lattice().clone()),
        (None, SeqKind::Net) => Generator::Net(default_net().clone()),
    })
}

/// One (method, sequence) combination.
#[derive(Clone)]
struct Cell {
    method: Method,
    seq: SeqKind,
    generator: Option<Generator>,
}

impl Cell {
    fn label(&self) -> &'static str {
        self.method.sequence_label(self.seq)
    }
}

fn cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    for &method in &cfg.methods {
        if method == Method::Mc {
            out.push(Cell {
                method,
                seq: SeqKind::Net,
                generator: None,
            });
            continue;
        }
        for &seq in &cfg.sequences {
            out.push(Cell {
                method,
                seq,
                generator: Some(generator_for(cfg, seq)?),
            });
        }
    }
    Ok(out)
}

/// Run one trial of `cell` at a single budget, reporting intermediate
/// estimates to `observer`.
fn run_once(
    cfg: &ExperimentConfig,
    problem: &dyn MlProblem,
    cell: &Cell,
    init: &[u64],
    budget: f64,
    key: &StreamKey,
    observer: &mut dyn FnMut(&MlEstimate),
) -> Result<MlEstimate> {
    let mut rng = key.rng();
    match (cell.method, &cell.generator) {
        (Method::Mc, _) => run_mc_observed(problem, budget, init, &mut rng, observer),
        (Method::Rqmc, Some(g)) => {
            let configs = rqmc_configs(problem, g, cfg.replications, &mut rng)?;
            run_rqmc_observed(problem, budget, init, &configs, observer)
        }
        (Method::Bqmc, Some(g)) => {
            let configs = bqmc_configs(problem, g, &mut rng)?;
            let family = cfg.kernel_for(cell.seq);
            run_bqmc_observed(problem, budget, init, &configs, family, &cfg.gp, observer)
        }
        _ => unreachable!("QMC cells carry a generator"),
    }
}

fn record(
    cfg: &ExperimentConfig,
    problem: &dyn MlProblem,
    cell: &Cell,
    budget: f64,
    trial: usize,
    est: &MlEstimate,
    wall: f64,
) -> TrialRecord {
    TrialRecord {
        problem: cfg.problem.clone(),
        method: cell.method,
        sequence: cell.label().to_string(),
        budget,
        trial,
        nu_hat: est.nu_hat,
        std_err: est.std_err,
        abs_error: problem.reference().map(|r| (est.nu_hat - r).abs()),
        n_per_level: est.n_per_level.clone(),
        cost: est.evals_total_cost,
        wall_time_s: wall,
    }
}

/// All budgets of one trial of one cell.
fn run_trial(
    cfg: &ExperimentConfig,
    problem: &dyn MlProblem,
    cell: &Cell,
    init: &[u64],
    budgets: &[f64],
    trial: usize,
) -> Result<Vec<TrialRecord>> {
    let key = StreamKey::new(cfg.seed)
        .name(&cfg.problem)
        .name(cell.method.as_str())
        .name(cell.label())
        .index(trial as u64);
    if problem.num_levels() == 1 {
        let start = Instant::now();
        let mut snaps: Vec<(MlEstimate, f64)> = Vec::new();
        let top = *budgets.last().expect("nonempty budgets");
        run_once(cfg, problem, cell, init, top, &key, &mut |e| {
            snaps.push((e.clone(), start.elapsed().as_secs_f64()))
        })?;
        return budgets
            .iter()
            .map(|&b| {
                let (est, wall) = snaps
                    .iter()
                    .rev()
                    .find(|(e, _)| e.evals_total_cost <= b)
                    .ok_or(Error::BudgetTooSmall {
                        budget: b,
                        needed: snaps[0].0.evals_total_cost,
                    })?;
                Ok(record(cfg, problem, cell, b, trial, est, *wall))
            })
            .collect();
    }
    budgets
        .iter()
        .map(|&b| {
            let start = Instant::now();
            let est = run_once(cfg, problem, cell, init, b, &key, &mut |_| {})?;
            Ok(record(
                cfg,
                problem,
                cell,
                b,
                trial,
                &est,
                start.elapsed().as_secs_f64(),
            ))
        })
        .collect()
}

/// Execute every (method, sequence, budget, trial) of the config. Records are
/// ordered by method, sequence, budget and trial.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let problem = problem_by_name(&cfg.problem, cfg.dim)?;
    let problem = problem.as_ref();
    let init = cfg.init.resolve(problem.num_levels());
    let mut budgets = cfg.budgets.clone();
    budgets.sort_by(f64::total_cmp);
    budgets.dedup();
    let cells = cells(cfg)?;
    for cell in &cells {
        let reps = if cell.method == Method::Rqmc {
            cfg.replications
        } else {
            1
        };
        let needed: f64 = reps as f64
            * init
                .iter()
                .enumerate()
                .map(|(l, &n)| n as f64 * problem.cost(l))
                .sum::<f64>();
        if init.len() != problem.num_levels() || needed > budgets[0] {
            return Err(Error::BudgetTooSmall {
                budget: budgets[0],
                needed,
            });
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let results: Vec<Result<Vec<TrialRecord>>> = jobs
        .par_iter()
        .map(|&(c, t)| run_trial(cfg, problem, &cells[c], &init, &budgets, t))
        .collect();
    let mut records = Vec::with_capacity(jobs.len() * budgets.len());
    for r in results {
        records.extend(r?);
    }
    // (cell, trial, budget) -> (cell, budget, trial)
    let order = |r: &TrialRecord| {
        let c = cells
            .iter()
            .position(|c| c.method == r.method && c.label() == r.sequence)
            .unwrap_or(0);
        (
            c,
            budgets.iter().position(|b| *b == r.budget).unwrap_or(0),
            r.trial,
        )
    };
    records.sort_by_key(order);
    let summary = summarize(&records)?;
    let checks = evaluate_checks(cfg, &summary, &records);
    Ok(ExperimentOutput {
        records,
        summary,
        checks,
    })
}

/// Mean and standard deviation of `Y_level` from IID samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub mean: f64,
    pub std: f64,
}

/// Per-level mean and standard deviation of `Y_l` from `n` IID points.
pub fn level_statistics<R: Rng + ?Sized>(
    problem: &dyn MlProblem,
    n: usize,
    rng: &mut R,
) -> Vec<LevelStats> {
    (0..problem.num_levels())
        .map(|l| {
            let d = problem.dim(l);
            let x: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>()).collect();
            let mut y = Vec::with_capacity(n);
            problem.eval_batch(l, &x, &mut y);
            let mean = y.iter().sum::<f64>() / n as f64;
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            LevelStats {
                level: l,
                mean,
                std: var.sqrt(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(text).unwrap()
    }

    #[test]
    fn constant_single_trial() {
        let out = run_experiment(&cfg(
            "problem = \"constant\"\nmethods = [\"mc\"]\nbudgets = [128]\ntrials = 1\ninit = 8",
        ))
        .unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].std_err, 0.0);
        assert_eq!(out.records[0].abs_error, Some(0.0));
    }

    #[test]
    fn snapshots_equal_separate_runs() {
        let c = cfg(
            "problem = \"ridge_pl\"\ndim = 6\nmethods = [\"mc\", \"rqmc\", \"bqmc\"]\n\
             sequences = [\"net\", \"lattice\"]\nbudgets = [512, 1024, 4096]\ntrials = 2\ninit = 16",
        );
        let all = run_experiment(&c).unwrap();
        let problem = problem_by_name("ridge_pl", Some(6)).unwrap();
        for cell in cells(&c).unwrap() {
            for b in [512.0, 1024.0] {
                let key = StreamKey::new(0)
                    .name("ridge_pl")
                    .name(cell.method.as_str())
                    .name(cell.label())
                    .index(1);
                let est =
                    run_once(&c, problem.as_ref(), &cell, &[16], b, &key, &mut |_| {}).unwrap();
                let r = all
                    .records
                    .iter()
                    .find(|r| {
                        r.method == cell.method
                            && r.sequence == cell.label()
                            && r.budget == b
                            && r.trial == 1
                    })
                    .unwrap();
                assert_eq!(
                    r.nu_hat.to_bits(),
                    est.nu_hat.to_bits(),
                    "{} {}",
                    cell.method,
                    b
                );
                assert_eq!(r.std_err.to_bits(), est.std_err.to_bits());
                assert_eq!(r.n_per_level, est.n_per_level);
            }
        }
    }

    #[test]
    fn infeasible_budget_is_error() {
        let c = cfg("problem = \"sumxex\"\nmethods = [\"rqmc\"]\nbudgets = [256]\ntrials = 1");
        assert!(matches!(
            run_experiment(&c),
            Err(Error::BudgetTooSmall { .. })
        ));
        let c = cfg("problem = \"nope\"\nbudgets = [256]\ntrials = 1");
        assert!(matches!(run_experiment(&c), Err(Error::Unknown { .. })));
    }

    #[test]
    fn level_stats_of_constant() {
        let p = crate::problems::ConstantProblem::new(vec![2.0, 0.5]);
        let s = level_statistics(&p, 16, &mut StreamKey::new(1).rng());
        assert_eq!(s[1].mean, 0.5);
        assert_eq!(s[0].std, 0.0);
    }
}
