//! Single-level test integrands on `[0, 1]^d`.

use super::normal::{clamped_inv_cdf, norm_cdf, norm_pdf};
use super::MlProblem;

/// Mean of the Johnson SU distribution with `gamma = delta = lambda = 1`, `xi = 0`,
/// i.e. `-sqrt(e) sinh(1)` (cross-checked in oracles/reference_values.py).
pub const JSU_MEAN: f64 = -1.9375792053127157;

/// `-d + sum_j x_j e^{x_j}`; integrates to zero.
pub fn sumxex(x: &[f64]) -> f64 {
    x.iter().map(|&v| v * v.exp()).sum::<f64>() - x.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightKind {
    Sparse,
    Equal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RidgeKind {
    /// Piecewise linear with a kink at `u = 1`.
    Pl,
    /// Heavy-tailed Johnson SU transform.
    Jsu,
}

/// Ridge function `g(sum_j c_j Phi^{-1}(x_j))` with unit-norm weights.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeSpec {
    pub weights: WeightKind,
    pub kind: RidgeKind,
    pub c: Vec<f64>,
}

impl RidgeSpec {
    /// `c_j` proportional to `2^-j`.
    pub fn sparse(d: usize, kind: RidgeKind) -> Self {
        let raw: Vec<f64> = (1..=d).map(|j| 0.5f64.powi(j as i32)).collect();
        let norm = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
        Self {
            weights: WeightKind::Sparse,
            kind,
            c: raw.into_iter().map(|c| c / norm).collect(),
        }
    }

    /// `c_j = d^{-1/2}`.
    pub fn equal(d: usize, kind: RidgeKind) -> Self {
        Self {
            weights: WeightKind::Equal,
            kind,
            c: vec![1.0 / (d as f64).sqrt(); d],
        }
    }

    pub fn d(&self) -> usize {
        self.c.len()
    }

    fn u(&self, x: &[f64]) -> f64 {
        self.c
            .iter()
            .zip(x)
            .map(|(&c, &v)| c * clamped_inv_cdf(v))
            .sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let u = self.u(x);
        match self.kind {
            RidgeKind::Pl => pl_payoff(u),
            RidgeKind::Jsu => (u - 1.0).sinh() - JSU_MEAN,
        }
    }
}

fn pl_payoff(u: f64) -> f64 {
    (u - 1.0).max(0.0) - norm_pdf(1.0) + norm_cdf(-1.0)
}

/// Sparse-weight piecewise-linear ridge function.
pub fn ridge_pl(x: &[f64]) -> f64 {
    RidgeSpec::sparse(x.len(), RidgeKind::Pl).eval(x)
}

/// Sparse-weight Johnson SU ridge function.
pub fn ridge_jsu(x: &[f64]) -> f64 {
    RidgeSpec::sparse(x.len(), RidgeKind::Jsu).eval(x)
}

fn genz_coefficients(d: usize) -> Vec<f64> {
    let s: f64 = (1..=d).map(|j| 1.0 / (j * j) as f64).sum();
    (1..=d).map(|j| 1.0 / ((j * j) as f64 * 4.0 * s)).collect()
}

/// Genz corner peak with coefficients of the second kind.
pub fn genz_corner_peak2(x: &[f64]) -> f64 {
    let c = genz_coefficients(x.len());
    genz_eval(&c, x)
}

fn genz_eval(c: &[f64], x: &[f64]) -> f64 {
    let s: f64 = c.iter().zip(x).map(|(a, b)| a * b).sum();
    (1.0 + s).powi(-(c.len() as i32 + 1))
}

/// Exact integral of the corner-peak function, from
/// `a^{-(d+1)} = (1/d!) int_0^inf t^d e^{-a t} dt` and independence:
/// `(1/d!) int_0^inf t^d e^{-t} prod_j (1 - e^{-c_j t}) / (c_j t) dt`,
/// computed with composite Simpson on a truncated range.
pub fn genz_reference(c: &[f64]) -> f64 {
    let d = c.len() as f64;
    let ln_fact: f64 = (1..=c.len()).map(|k| (k as f64).ln()).sum();
    let f = |t: f64| -> f64 {
        if t == 0.0 {
            return if c.is_empty() { 1.0 } else { 0.0 };
        }
        let prod: f64 = c.iter().map(|&cj| -(-cj * t).exp_m1() / (cj * t)).product();
        (d * t.ln() - t - ln_fact).exp() * prod
    };
    let upper = d + 40.0 * (d + 1.0).sqrt() + 60.0;
    let m = 40_000usize;
    let h = upper / m as f64;
    let mut s = f(0.0) + f(upper);
    for k in 1..m {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `sumxex` as a one-level problem.
#[derive(Clone, Debug)]
pub struct Sumxex {
    d: usize,
}

impl Sumxex {
    pub fn new(d: usize) -> Self {
        Self { d }
    }
}

impl MlProblem for Sumxex {
    fn name(&self) -> &str {
        "sumxex"
    }
    fn num_levels(&self) -> usize {
        1
    }
    fn dim(&self, _level: usize) -> usize {
        self.d
    }
    fn cost(&self, _level: usize) -> f64 {
        1.0
    }
    fn eval(&self, _level: usize, x: &[f64]) -> f64 {
        sumxex(&x[..self.d])
    }
    fn reference(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// A ridge function as a one-level problem.
#[derive(Clone, Debug)]
pub struct Ridge {
    spec: RidgeSpec,
    name: &'static str,
}

impl Ridge {
    pub fn new(spec: RidgeSpec) -> Self {
        let name = match (spec.kind, spec.weights) {
            (RidgeKind::Pl, WeightKind::Sparse) => "ridge_pl",
            (RidgeKind::Jsu, WeightKind::Sparse) => "ridge_jsu",
            (RidgeKind::Pl, WeightKind::Equal) => "ridge_pl_equal",
            (RidgeKind::Jsu, WeightKind::Equal) => "ridge_jsu_equal",
        };
        Self { spec, name }
    }
}

impl MlProblem for Ridge {
    fn name(&self) -> &str {
        self.name
    }
    fn num_levels(&self) -> usize {
        1
    }
    fn dim(&self, _level: usize) -> usize {
        self.spec.d()
    }
    fn cost(&self, _level: usize) -> f64 {
        1.0
    }
    fn eval(&self, _level: usize, x: &[f64]) -> f64 {
        self.spec.eval(x)
    }
    fn reference(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Genz corner peak as a one-level problem.
#[derive(Clone, Debug)]
pub struct GenzCornerPeak {
    c: Vec<f64>,
    reference: f64,
}

impl GenzCornerPeak {
    pub fn new(d: usize) -> Self {
        let c = genz_coefficients(d);
        let reference = genz_reference(&c);
        Self { c, reference }
    }
}

impl MlProblem for GenzCornerPeak {
    fn name(&self) -> &str {
        "genz"
    }
    fn num_levels(&self) -> usize {
        1
    }
    fn dim(&self, _level: usize) -> usize {
        self.c.len()
    }
    fn cost(&self, _level: usize) -> f64 {
        1.0
    }
    fn eval(&self, _level: usize, x: &[f64]) -> f64 {
        genz_eval(&self.c, x)
    }
    fn reference(&self) -> Option<f64> {
        Some(self.reference)
    }
}
