//! Multilevel Monte Carlo with independent uniform points.

use rand::Rng;

use super::{argmax_lowest, check_init, feasible_levels, finish, LevelDiagnostics, MlEstimate};
use crate::error::Result;
use crate::problems::MlProblem;

/// Running mean and sum of squared deviations.
#[derive(Clone, Copy, Debug, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, y: f64) {
        self.n += 1;
        let delta = y - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (y - self.mean);
    }

    fn sample_var(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// Greedy doubling IID multilevel Monte Carlo. `init` holds the initial
/// sample size per level.
pub fn run_mc<R: Rng + ?Sized>(
    problem: &dyn MlProblem,
    budget: f64,
    init: &[u64],
    rng: &mut R,
) -> Result<MlEstimate> {
    run_mc_observed(problem, budget, init, rng, &mut |_| {})
}

fn snapshot(
    problem: &dyn MlProblem,
    stats: &[Welford],
    n: &[u64],
    history: &[usize],
) -> MlEstimate {
    let diagnostics = stats
        .iter()
        .map(|s| LevelDiagnostics {
            mu_hat: s.mean,
            var_hat: s.sample_var() / s.n as f64,
        })
        .collect();
    finish(problem, diagnostics, n.to_vec(), history.to_vec())
}

/// [`run_mc`], reporting the estimate after every round of evaluations.
pub(crate) fn run_mc_observed<R: Rng + ?Sized>(
    problem: &dyn MlProblem,
    budget: f64,
    init: &[u64],
    rng: &mut R,
    observer: &mut dyn FnMut(&MlEstimate),
) -> Result<MlEstimate> {
    check_init(problem, budget, init, 1, false)?;
    let levels = problem.num_levels();
    let mut stats = vec![Welford::default(); levels];
    let mut n = vec![0u64; levels];
    let mut next = init.to_vec();
    let mut update: Vec<usize> = (0..levels).collect();
    let mut history = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    loop {
        for &l in &update {
            let d = problem.dim(l);
            let m = (next[l] - n[l]) as usize;
            x.clear();
            x.extend((0..m * d).map(|_| rng.gen::<f64>()));
            y.clear();
            problem.eval_batch(l, &x, &mut y);
            for &v in &y {
                stats[l].push(v);
            }
            n[l] = next[l];
            next[l] = 2 * n[l];
        }
        observer(&snapshot(problem, &stats, &n, &history));
        let feasible = feasible_levels(problem, &n, 1, budget, None);
        if feasible.is_empty() {
            break;
        }
        let star = argmax_lowest(&feasible, |l| {
            stats[l].sample_var() / (n[l] as f64 * problem.cost(l))
        });
        history.push(star);
        update = vec![star];
    }
    Ok(snapshot(problem, &stats, &n, &history))
}
