//! Discretely monitored Asian (geometric average) and lookback options under
//! geometric Brownian motion, with a PCA construction of the Brownian path.
//!
//! The covariance `Sigma = (min(j, j') / d)` of `(B(1/d), ..., B(1))` has the
//! closed-form eigenpairs
//! `lambda_k = 1 / (4 d sin^2((2k-1) pi / (2(2d+1))))` and
//! `v_k(j) = 2/sqrt(2d+1) sin((2k-1) j pi / (2d+1))`, `k, j = 1..d`,
//! so `A z` is a sine sum evaluated with one complex FFT of length `2(2d+1)`.
//!
//! By default the coarse payoff of `Y_l` is evaluated on every other
//! monitoring date of the fine path. [`Coupling::Prefix`] instead rebuilds
//! the coarse path from the leading `d_{l-1}` coordinates of `x`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::normal::{clamped_inv_cdf, norm_cdf};
use super::MlProblem;
use crate::error::{Error, Result};

/// Market and discretization parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptionSpec {
    pub s0: f64,
    pub strike: f64,
    pub r: f64,
    pub sigma: f64,
    pub levels: usize,
    pub coupling: Coupling,
}

/// How the coarse term of `Y_l` shares randomness with the fine term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Coupling {
    /// Coarse payoff on the fine path sampled at every second date.
    #[default]
    Subsample,
    /// Coarse path built from the first `d_{l-1}` coordinates.
    Prefix,
}

impl Default for OptionSpec {
    fn default() -> Self {
        Self {
            s0: 100.0,
            strike: 100.0,
            r: 0.05,
            sigma: 0.2,
            levels: 8,
            coupling: Coupling::Subsample,
        }
    }
}

impl OptionSpec {
    /// Monitoring times on 0-based level `level`: `2^{3 + level}`.
    pub fn monitoring(&self, level: usize) -> usize {
        1 << (3 + level)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptionKind {
    Asian,
    Lookback,
}

/// Eigenvalues (descending) of `(min(j, j') / d)`.
fn pca_eigenvalues(d: usize) -> Vec<f64> {
    let m = (2 * d + 1) as f64;
    (1..=d)
        .map(|k| {
            let s = ((2 * k - 1) as f64 * PI / (2.0 * m)).sin();
            1.0 / (4.0 * d as f64 * s * s)
        })
        .collect()
}

/// Dense PCA factor `A = V diag(sqrt(lambda))`, row-major `d x d`, columns in
/// order of decreasing variance.
pub fn brownian_factor(d: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let lam = pca_eigenvalues(d);
    let m = (2 * d + 1) as f64;
    let norm = 2.0 / m.sqrt();
    let mut a = vec![0.0; d * d];
    for j in 1..=d {
        for k in 1..=d {
            let v = norm * ((2 * k - 1) as f64 * j as f64 * PI / m).sin();
            a[(j - 1) * d + (k - 1)] = v * lam[k - 1].sqrt();
        }
    }
    Ok(a)
}

/// Fast application of the PCA factor.
#[derive(Clone)]
pub struct PcaFactor {
    d: usize,
    weights: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PcaFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PcaFactor").field("d", &self.d).finish()
    }
}

impl PcaFactor {
    pub fn new(d: usize, planner: &mut FftPlanner<f64>) -> Self {
        let norm = 2.0 / ((2 * d + 1) as f64).sqrt();
        Self {
            d,
            weights: pca_eigenvalues(d)
                .into_iter()
                .map(|l| norm * l.sqrt())
                .collect(),
            fft: planner.plan_fft_inverse(2 * (2 * d + 1)),
        }
    }

    /// `out = A z`, using `buf` (length `2(2d+1)`) as workspace.
    pub fn apply(&self, z: &[f64], out: &mut [f64], buf: &mut Vec<Complex64>) {
        let len = 2 * (2 * self.d + 1);
        buf.clear();
        buf.resize(len, Complex64::new(0.0, 0.0));
        for (k, (&zk, &w)) in z.iter().zip(&self.weights).enumerate() {
            buf[2 * k + 1] = Complex64::new(w * zk, 0.0);
        }
        self.fft.process(buf);
        for (j, o) in out.iter_mut().enumerate() {
            *o = buf[j + 1].im;
        }
    }
}

#[derive(Default)]
struct Workspace {
    buf: Vec<Complex64>,
    z: Vec<f64>,
    path: Vec<f64>,
}

/// Multilevel option pricing problem.
#[derive(Clone, Debug)]
pub struct OptionProblem {
    kind: OptionKind,
    spec: OptionSpec,
    factors: Vec<PcaFactor>,
}

impl OptionProblem {
    pub fn new(kind: OptionKind, spec: OptionSpec) -> Result<Self> {
        if spec.levels == 0 || spec.levels > 8 {
            return Err(Error::InvalidParameter(format!(
                "option levels {} not in 1..=8",
                spec.levels
            )));
        }
        if !(spec.s0 > 0.0 && spec.strike > 0.0 && spec.sigma >= 0.0) {
            return Err(Error::InvalidParameter("invalid option parameters".into()));
        }
        let mut planner = FftPlanner::new();
        let factors = (0..spec.levels)
            .map(|l| PcaFactor::new(spec.monitoring(l), &mut planner))
            .collect();
        Ok(Self {
            kind,
            spec,
            factors,
        })
    }

    pub fn spec(&self) -> &OptionSpec {
        &self.spec
    }

    /// Discounted payoff `Q_level(x)`.
    pub fn q(&self, level: usize, x: &[f64]) -> f64 {
        let mut ws = Workspace::default();
        self.log_path(level, x, &mut ws);
        self.payoff(&ws.path, 1)
    }

    /// Log prices at the `d_level` monitoring dates, left in `ws.path`.
    fn log_path(&self, level: usize, x: &[f64], ws: &mut Workspace) {
        let d = self.spec.monitoring(level);
        ws.z.clear();
        ws.z.extend(x[..d].iter().map(|&v| clamped_inv_cdf(v)));
        ws.path.clear();
        ws.path.resize(d, 0.0);
        self.factors[level].apply(&ws.z, &mut ws.path, &mut ws.buf);
        let OptionSpec { s0, r, sigma, .. } = self.spec;
        let drift = r - 0.5 * sigma * sigma;
        for (j, b) in ws.path.iter_mut().enumerate() {
            *b = s0.ln() + drift * (j + 1) as f64 / d as f64 + sigma * *b;
        }
    }

    /// Discounted payoff of the dates `path[stride - 1], path[2 stride - 1], ...`.
    fn payoff(&self, path: &[f64], stride: usize) -> f64 {
        let dates = path.iter().skip(stride - 1).step_by(stride);
        let n = path.len() / stride;
        let disc = (-self.spec.r).exp();
        match self.kind {
            OptionKind::Asian => {
                let mean_log = dates.sum::<f64>() / n as f64;
                (mean_log.exp() - self.spec.strike).max(0.0) * disc
            }
            OptionKind::Lookback => {
                let min_log = dates.fold(f64::INFINITY, |a, &b| a.min(b));
                (path[path.len() - 1].exp() - min_log.exp()) * disc
            }
        }
    }

    fn y_with(&self, level: usize, x: &[f64], ws: &mut Workspace) -> f64 {
        self.log_path(level, x, ws);
        let fine = self.payoff(&ws.path, 1);
        if level == 0 {
            return fine;
        }
        match self.spec.coupling {
            Coupling::Subsample => fine - self.payoff(&ws.path, 2),
            Coupling::Prefix => {
                self.log_path(level - 1, x, ws);
                fine - self.payoff(&ws.path, 1)
            }
        }
    }

    /// Price of the geometric-average Asian call with `d` monitoring dates.
    pub fn geometric_asian_price(spec: &OptionSpec, d: usize) -> f64 {
        let OptionSpec {
            s0,
            strike,
            r,
            sigma,
            ..
        } = *spec;
        let df = d as f64;
        let m = s0.ln() + (r - 0.5 * sigma * sigma) * (df + 1.0) / (2.0 * df);
        let s2 = sigma * sigma * (df + 1.0) * (2.0 * df + 1.0) / (6.0 * df * df);
        let s = s2.sqrt();
        if s == 0.0 {
            return (m.exp() - strike).max(0.0) * (-r).exp();
        }
        let d2 = (m - strike.ln()) / s;
        let d1 = d2 + s;
        ((m + 0.5 * s2).exp() * norm_cdf(d1) - strike * norm_cdf(d2)) * (-r).exp()
    }
}

impl MlProblem for OptionProblem {
    fn name(&self) -> &str {
        match self.kind {
            OptionKind::Asian => "asian",
            OptionKind::Lookback => "lookback",
        }
    }

    fn num_levels(&self) -> usize {
        self.spec.levels
    }

    fn dim(&self, level: usize) -> usize {
        self.spec.monitoring(level)
    }

    fn cost(&self, level: usize) -> f64 {
        2f64.powi(level as i32 + 1 - self.spec.levels as i32)
    }

    fn eval(&self, level: usize, x: &[f64]) -> f64 {
        self.y_with(level, x, &mut Workspace::default())
    }

    fn eval_batch(&self, level: usize, points: &[f64], out: &mut Vec<f64>) {
        let mut ws = Workspace::default();
        out.extend(
            points
                .chunks_exact(self.dim(level))
                .map(|x| self.y_with(level, x, &mut ws)),
        );
    }

    fn reference(&self) -> Option<f64> {
        match self.kind {
            OptionKind::Asian => Some(Self::geometric_asian_price(
                &self.spec,
                self.spec.monitoring(self.spec.levels - 1),
            )),
            OptionKind::Lookback => None,
        }
    }
}
