//! Fast Bayesian multilevel QMC: one randomized sequence and one GP per
//! level, with levels chosen by projected posterior variance.

use rand::Rng;

use super::rqmc::eval_block;
use super::{check_init, feasible_levels, finish, LevelDiagnostics, MlEstimate};
use crate::error::{Error, Result};
use crate::gp::{loglog_interpolate, GpLevelState, GpOptions};
use crate::kernels::KernelFamily;
use crate::ld::{lms_scramble, Generator, LdConfig};
use crate::problems::MlProblem;

/// Posterior variance of a level with frozen hyperparameters as a function
/// of its sample size.
pub trait VarianceForecast {
    /// Exact at powers of two, log-log interpolated in between.
    fn forecast(&mut self, n: f64) -> Result<f64>;
}

impl VarianceForecast for GpLevelState {
    fn forecast(&mut self, n: f64) -> Result<f64> {
        self.projected_variance(n)
    }
}

/// Tabulated variances `values[p]` at `n = 2^p`. Records every query.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PowerTable {
    pub values: Vec<f64>,
    pub queries: Vec<f64>,
}

impl PowerTable {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            queries: Vec::new(),
        }
    }
}

impl VarianceForecast for PowerTable {
    fn forecast(&mut self, n: f64) -> Result<f64> {
        self.queries.push(n);
        let lg = n.log2();
        let p = lg.floor() as usize;
        let out_of_range = || Error::InvalidParameter(format!("no tabulated variance for n = {n}"));
        let get = |k: usize| self.values.get(k).copied().filter(|v| !v.is_nan());
        if lg == p as f64 {
            return get(p).ok_or_else(out_of_range);
        }
        match (get(p), get(p + 1)) {
            (Some(a), Some(b)) => Ok(loglog_interpolate(p as u32, a, b, n)),
            _ => Err(out_of_range()),
        }
    }
}

/// Choose the level to double among `feasible` (nonempty).
///
/// Levels are visited by non-increasing doubling cost `n_l C_l` (stable, so
/// lower levels first among equals). The running choice `l` is replaced by
/// `l'` when spending the same cost on `l'` is projected to remove at least
/// as much variance as doubling `l`.
pub fn level_select_bqmc<V: VarianceForecast>(
    feasible: &[usize],
    costs: &[f64],
    n: &[u64],
    states: &mut [V],
) -> Result<usize> {
    if feasible.is_empty() {
        return Err(Error::InvalidParameter("no feasible level".into()));
    }
    let mut order = feasible.to_vec();
    order.sort_by(|&a, &b| {
        let ca = n[a] as f64 * costs[a];
        let cb = n[b] as f64 * costs[b];
        cb.partial_cmp(&ca).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut best = order[0];
    for &cand in &order[1..] {
        let n_hat = n[best] as f64 * costs[best] / costs[cand] + n[cand] as f64;
        let gain_cand = states[cand].forecast(n[cand] as f64)? - states[cand].forecast(n_hat)?;
        let gain_best =
            states[best].forecast(n[best] as f64)? - states[best].forecast(2.0 * n[best] as f64)?;
        if gain_cand >= gain_best {
            best = cand;
        }
    }
    Ok(best)
}

/// Bayesian multilevel QMC with randomizations drawn from `rng`: nets get one
/// linear matrix scramble shared by all levels, and every level gets its own
/// random shift.
pub fn run_bqmc<R: Rng + ?Sized>(
    problem: &dyn MlProblem,
    budget: f64,
    init: &[u64],
    generator: &Generator,
    family: KernelFamily,
    opts: &GpOptions,
    rng: &mut R,
) -> Result<MlEstimate> {
    check_init(problem, budget, init, 1, true)?;
    let configs = bqmc_configs(problem, generator, rng)?;
    run_bqmc_with(problem, budget, init, &configs, family, opts)
}

/// One randomized sequence per level, restricted to that level's dimension.
/// Nets share a single linear matrix scramble across levels.
pub fn bqmc_configs<R: Rng + ?Sized>(
    problem: &dyn MlProblem,
    generator: &Generator,
    rng: &mut R,
) -> Result<Vec<LdConfig>> {
    let base = match generator.truncate(problem.max_dim())? {
        Generator::Net(g) => Generator::Net(lms_scramble(&g, rng)),
        lat => lat,
    };
    (0..problem.num_levels())
        .map(|l| {
            let g = base.truncate(problem.dim(l))?;
            let shift = g.random_shift(rng);
            LdConfig::new(g, shift)
        })
        .collect()
}

/// Bayesian multilevel QMC on explicit per-level randomized sequences.
pub fn run_bqmc_with(
    problem: &dyn MlProblem,
    budget: f64,
    init: &[u64],
    configs: &[LdConfig],
    family: KernelFamily,
    opts: &GpOptions,
) -> Result<MlEstimate> {
    run_bqmc_observed(problem, budget, init, configs, family, opts, &mut |_| {})
}

/// [`run_bqmc_with`], reporting the estimate after every round of evaluations.
pub(crate) fn run_bqmc_observed(
    problem: &dyn MlProblem,
    budget: f64,
    init: &[u64],
    configs: &[LdConfig],
    family: KernelFamily,
    opts: &GpOptions,
    observer: &mut dyn FnMut(&MlEstimate),
) -> Result<MlEstimate> {
    let levels = problem.num_levels();
    if configs.len() != levels {
        return Err(Error::DimensionMismatch {
            expected: levels,
            got: configs.len(),
        });
    }
    check_init(problem, budget, init, 1, true)?;
    if init.iter().any(|&k| k < 2) {
        return Err(Error::InvalidParameter(
            "initial sizes must be at least 2 to fit a GP".into(),
        ));
    }
    let mut states = Vec::with_capacity(levels);
    for (l, cfg) in configs.iter().enumerate() {
        if cfg.d() != problem.dim(l) {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(l),
                got: cfg.d(),
            });
        }
        if init[l] > cfg.generator.max_points() {
            return Err(Error::TooManyPoints {
                index: init[l] - 1,
                max: cfg.generator.max_points(),
            });
        }
        states.push(GpLevelState::new(
            cfg.generator.clone(),
            family,
            opts.nugget,
        )?);
    }
    let max_points: Vec<u64> = configs.iter().map(|c| c.generator.max_points()).collect();
    let costs: Vec<f64> = (0..levels).map(|l| problem.cost(l)).collect();

    let mut n = vec![0u64; levels];
    let mut next = init.to_vec();
    let mut diag = vec![
        LevelDiagnostics {
            mu_hat: 0.0,
            var_hat: 0.0
        };
        levels
    ];
    let mut update: Vec<usize> = (0..levels).collect();
    let mut history = Vec::new();
    let mut y = Vec::new();
    loop {
        for &l in &update {
            y.clear();
            eval_block(problem, l, &configs[l], n[l], next[l], &mut y)?;
            states[l].append(&y)?;
            states[l].optimize_hyperparameters(opts)?;
            let post = states[l].posterior_cubature();
            diag[l] = LevelDiagnostics {
                mu_hat: post.mu_hat,
                var_hat: post.v_hat,
            };
            n[l] = next[l];
            next[l] = 2 * n[l];
        }
        observer(&finish(problem, diag.clone(), n.clone(), history.clone()));
        let feasible = feasible_levels(problem, &n, 1, budget, Some(&max_points));
        if feasible.is_empty() {
            break;
        }
        let star = level_select_bqmc(&feasible, &costs, &n, &mut states)?;
        history.push(star);
        update = vec![star];
    }
    Ok(finish(problem, diag, n, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::run_rqmc_with;
    use crate::ld::{default_lattice, default_net, Shift};
    use crate::problems::{ConstantProblem, Sumxex};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tables(rows: &[&[(usize, f64)]]) -> Vec<PowerTable> {
        rows.iter()
            .map(|r| {
                let mut v = vec![f64::NAN; 12];
                for &(p, x) in *r {
                    v[p] = x;
                }
                PowerTable::new(v)
            })
            .collect()
    }

    #[test]
    fn equal_costs_pick_larger_decrease() {
        let mut t = tables(&[&[(2, 1.0), (3, 0.9)], &[(2, 1.0), (3, 0.5)]]);
        assert_eq!(
            level_select_bqmc(&[0, 1], &[1.0, 1.0], &[4, 4], &mut t).unwrap(),
            1
        );
        // no query beyond 2n
        assert!(t.iter().flat_map(|x| &x.queries).all(|&q| q <= 8.0));
        let mut t = tables(&[&[(2, 1.0), (3, 0.4)], &[(2, 1.0), (3, 0.5)]]);
        assert_eq!(
            level_select_bqmc(&[0, 1], &[1.0, 1.0], &[4, 4], &mut t).unwrap(),
            0
        );
    }

    #[test]
    fn ties_go_to_challenger() {
        let mut t = tables(&[&[(2, 1.0), (3, 0.5)], &[(2, 2.0), (3, 1.5)]]);
        assert_eq!(
            level_select_bqmc(&[0, 1], &[1.0, 1.0], &[4, 4], &mut t).unwrap(),
            1
        );
    }

    #[test]
    fn singleton() {
        let mut t = tables(&[&[], &[(0, 1.0)]]);
        assert_eq!(
            level_select_bqmc(&[1], &[1.0, 1.0], &[4, 1], &mut t).unwrap(),
            1
        );
        assert!(level_select_bqmc(&[], &[1.0], &[4], &mut t).is_err());
    }

    #[test]
    fn unequal_costs_interpolate() {
        // level 1 decays like 16 / n^2, so V(12) = 1/9
        let lvl1: &[(usize, f64)] = &[(2, 1.0), (3, 0.25), (4, 0.0625)];
        let mut t = tables(&[&[(4, 1.0), (5, 0.05)], lvl1]);
        assert_eq!(
            level_select_bqmc(&[0, 1], &[0.5, 1.0], &[16, 4], &mut t).unwrap(),
            0
        );
        assert!(t[1].queries.contains(&12.0));
        let mut t = tables(&[&[(4, 1.0), (5, 0.2)], lvl1]);
        assert_eq!(
            level_select_bqmc(&[0, 1], &[0.5, 1.0], &[16, 4], &mut t).unwrap(),
            1
        );
    }

    #[test]
    fn order_is_by_doubling_cost() {
        // level 2 doubles at the largest cost and is the initial choice
        let slow: &[(usize, f64)] = &[(1, 1.0), (2, 0.95), (3, 0.9), (4, 0.85)];
        let mut t = tables(&[slow, slow, &[(3, 1.0), (4, 0.0)]]);
        assert_eq!(
            level_select_bqmc(&[0, 1, 2], &[1.0, 1.0, 1.0], &[2, 2, 8], &mut t).unwrap(),
            2
        );
        assert!(t[2].queries.iter().all(|&q| q == 8.0 || q == 16.0));
    }

    #[test]
    fn power_table_interpolation_matches_direct() {
        let mut t = PowerTable::new(vec![1.0, 0.5, 0.25]);
        assert_eq!(t.forecast(2.0).unwrap(), 0.5);
        assert!((t.forecast(3.0).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert!(t.forecast(8.0).is_err());
    }

    #[test]
    fn constant_levels_are_exact() {
        let p = ConstantProblem::new(vec![1.0, -0.25]);
        let g = Generator::Net(default_net().clone());
        let est = run_bqmc(
            &p,
            256.0,
            &[16, 16],
            &g,
            KernelFamily::DsiWeighted,
            &GpOptions::default(),
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        assert_eq!(est.nu_hat, 0.75);
        assert!(est.std_err < 1e-6);
        assert!(est.evals_total_cost <= 256.0);
    }

    #[test]
    fn matches_single_replication_rqmc() {
        let p = Sumxex::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for g in [
            Generator::Net(default_net().truncate(4).unwrap()),
            Generator::Lattice(default_lattice().truncate(4).unwrap()),
        ] {
            let g = match g {
                Generator::Net(n) => Generator::Net(lms_scramble(&n, &mut rng)),
                l => l,
            };
            let shift: Shift = g.random_shift(&mut rng);
            let cfg = LdConfig::new(g.clone(), shift).unwrap();
            let family = KernelFamily::default_for(g.kind());
            let b = run_bqmc_with(
                &p,
                1024.0,
                &[32],
                &[cfg.clone()],
                family,
                &GpOptions::default(),
            )
            .unwrap();
            let r = run_rqmc_with(&p, 1024.0, &[32], &[vec![cfg]]).unwrap();
            assert_eq!(b.nu_hat.to_bits(), r.nu_hat.to_bits());
            assert_eq!(b.n_per_level, r.n_per_level);
        }
    }
}
