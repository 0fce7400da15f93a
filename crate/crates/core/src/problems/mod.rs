//! Test integrands and multilevel problems.
//!
//! Levels are indexed from 0 in code. Level `l` evaluates
//! `Y_l = Q_l - Q_{l-1}` (with `Q_{-1} = 0`) on the first [`MlProblem::dim`]
//! coordinates of its input.

pub mod elliptic;
pub mod normal;
pub mod options;
pub mod single;

use crate::error::{Error, Result};

pub use elliptic::Elliptic;
pub use normal::{clamped_inv_cdf, inv_normal_cdf, norm_cdf, norm_pdf};
pub use options::{brownian_factor, Coupling, OptionKind, OptionProblem, OptionSpec};
pub use single::{
    genz_corner_peak2, genz_reference, ridge_jsu, ridge_pl, sumxex, GenzCornerPeak, Ridge,
    RidgeKind, RidgeSpec, Sumxex, WeightKind,
};

/// A multilevel problem with a fixed number of levels.
pub trait MlProblem: Send + Sync {
    fn name(&self) -> &str;

    fn num_levels(&self) -> usize;

    /// Number of leading input coordinates level `level` uses.
    fn dim(&self, level: usize) -> usize;

    /// Cost of one evaluation on `level`, normalized so the finest level costs 1.
    fn cost(&self, level: usize) -> f64;

    /// `Y_level(x)` for `x` with at least `dim(level)` coordinates.
    fn eval(&self, level: usize, x: &[f64]) -> f64;

    /// Evaluate every row of a row-major block of width `dim(level)`.
    fn eval_batch(&self, level: usize, points: &[f64], out: &mut Vec<f64>) {
        let d = self.dim(level);
        out.extend(points.chunks_exact(d).map(|x| self.eval(level, x)));
    }

    /// The exact value of the full telescoping sum, when known.
    fn reference(&self) -> Option<f64>;

    fn max_dim(&self) -> usize {
        (0..self.num_levels())
            .map(|l| self.dim(l))
            .max()
            .unwrap_or(0)
    }
}

/// Every level returns a fixed value. Useful for sanity checks.
#[derive(Clone, Debug)]
pub struct ConstantProblem {
    pub values: Vec<f64>,
    pub costs: Vec<f64>,
    pub dims: Vec<usize>,
}

impl ConstantProblem {
    pub fn new(values: Vec<f64>) -> Self {
        let l = values.len();
        Self {
            costs: (0..l).map(|k| 2f64.powi(k as i32 + 1 - l as i32)).collect(),
            dims: vec![2; l],
            values,
        }
    }
}

impl MlProblem for ConstantProblem {
    fn name(&self) -> &str {
        "constant"
    }
    fn num_levels(&self) -> usize {
        self.values.len()
    }
    fn dim(&self, level: usize) -> usize {
        self.dims[level]
    }
    fn cost(&self, level: usize) -> f64 {
        self.costs[level]
    }
    fn eval(&self, level: usize, _x: &[f64]) -> f64 {
        self.values[level]
    }
    fn reference(&self) -> Option<f64> {
        Some(self.values.iter().sum())
    }
}

/// Build a problem from its identifier. `d` overrides the dimension of the
/// single-level problems (default 32).
pub fn problem_by_name(name: &str, d: Option<usize>) -> Result<Box<dyn MlProblem>> {
    let sd = d.unwrap_or(32);
    if sd == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    Ok(match name {
        "sumxex" => Box::new(Sumxex::new(sd)),
        "ridge_pl" => Box::new(Ridge::new(RidgeSpec::sparse(sd, RidgeKind::Pl))),
        "ridge_jsu" => Box::new(Ridge::new(RidgeSpec::sparse(sd, RidgeKind::Jsu))),
        "ridge_pl_equal" => Box::new(Ridge::new(RidgeSpec::equal(sd, RidgeKind::Pl))),
        "ridge_jsu_equal" => Box::new(Ridge::new(RidgeSpec::equal(sd, RidgeKind::Jsu))),
        "genz" => Box::new(GenzCornerPeak::new(sd)),
        "asian" => Box::new(OptionProblem::new(
            OptionKind::Asian,
            OptionSpec::default(),
        )?),
        "lookback" => Box::new(OptionProblem::new(
            OptionKind::Lookback,
            OptionSpec::default(),
        )?),
        "elliptic" => Box::new(Elliptic::new(4)),
        "constant" => Box::new(ConstantProblem::new(vec![1.0])),
        _ => {
            return Err(Error::Unknown {
                kind: "problem",
                name: name.to_string(),
            })
        }
    })
}

/// Identifiers accepted by [`problem_by_name`].
pub const PROBLEM_NAMES: &[&str] = &[
    "sumxex",
    "ridge_pl",
    "ridge_jsu",
    "ridge_pl_equal",
    "ridge_jsu_equal",
    "genz",
    "asian",
    "lookback",
    "elliptic",
    "constant",
];
