//! One-dimensional elliptic PDE with a log-normal random coefficient:
//! `-(e^{a(u, x)} q'(u))' = 1` on `(0, 1)`, `q(0) = q(1) = 0`, with
//! `a(u, x) = sum_{j=1}^{8} Phi^{-1}(x_j) sin(pi j u) / j`.
//! The quantity of interest is `q(1/2)`.

use std::f64::consts::PI;

use super::normal::clamped_inv_cdf;
use super::MlProblem;

/// Number of random coefficients.
pub const ELLIPTIC_DIM: usize = 8;

/// `E[Q]` on the finest of four levels (32 cells), estimated by
/// `oracles/reference_values.py` with standard error 7.8e-8.
pub const ELLIPTIC_REFERENCE: f64 = 0.151030312109769;

/// Standard error of [`ELLIPTIC_REFERENCE`].
pub const ELLIPTIC_REFERENCE_SE: f64 = 7.8e-8;

#[derive(Clone, Debug)]
pub struct Elliptic {
    levels: usize,
    /// Per level: `sin(pi j u_{k+1/2}) / j`, row-major `cells x 8`.
    tables: Vec<Vec<f64>>,
}

impl Elliptic {
    /// Level `l` (0-based) uses `2^{2+l}` cells.
    pub fn new(levels: usize) -> Self {
        let tables = (0..levels).map(|l| Self::table(Self::cells(l))).collect();
        Self { levels, tables }
    }

    pub fn cells(level: usize) -> usize {
        1 << (2 + level)
    }

    fn table(m: usize) -> Vec<f64> {
        let h = 1.0 / m as f64;
        let mut t = Vec::with_capacity(m * ELLIPTIC_DIM);
        for k in 0..m {
            let u = (k as f64 + 0.5) * h;
            t.extend((1..=ELLIPTIC_DIM).map(|j| (PI * j as f64 * u).sin() / j as f64));
        }
        t
    }

    /// `q(1/2)` on the given level.
    pub fn q(&self, level: usize, x: &[f64]) -> f64 {
        let z: Vec<f64> = x[..ELLIPTIC_DIM]
            .iter()
            .map(|&v| clamped_inv_cdf(v))
            .collect();
        let tab = &self.tables[level];
        let coef: Vec<f64> = tab
            .chunks_exact(ELLIPTIC_DIM)
            .map(|row| row.iter().zip(&z).map(|(s, z)| s * z).sum::<f64>().exp())
            .collect();
        solve_midpoint(&coef)
    }
}

/// Conservative three-point scheme with cell coefficients `coef` (one per
/// cell, `m` cells, `m` even); returns the solution at the middle node.
pub fn solve_midpoint(coef: &[f64]) -> f64 {
    let m = coef.len();
    let h2 = 1.0 / (m * m) as f64;
    let n = m - 1;
    // Thomas algorithm on interior nodes 1..m-1; row k couples nodes k, k±1.
    let mut c = vec![0.0; n];
    let mut r = vec![0.0; n];
    for k in 0..n {
        let diag = coef[k] + coef[k + 1];
        let lower = if k > 0 { -coef[k] } else { 0.0 };
        let upper = -coef[k + 1];
        let den = diag - lower * if k > 0 { c[k - 1] } else { 0.0 };
        assert!(den > 0.0, "nonpositive pivot");
        c[k] = upper / den;
        r[k] = (h2 - lower * if k > 0 { r[k - 1] } else { 0.0 }) / den;
    }
    let mut q = r[n - 1];
    for k in (m / 2 - 1..n - 1).rev() {
        q = r[k] - c[k] * q;
    }
    q
}

impl MlProblem for Elliptic {
    fn name(&self) -> &str {
        "elliptic"
    }

    fn num_levels(&self) -> usize {
        self.levels
    }

    fn dim(&self, _level: usize) -> usize {
        ELLIPTIC_DIM
    }

    fn cost(&self, level: usize) -> f64 {
        2f64.powi(level as i32 + 1 - self.levels as i32)
    }

    fn eval(&self, level: usize, x: &[f64]) -> f64 {
        let fine = self.q(level, x);
        if level == 0 {
            fine
        } else {
            fine - self.q(level - 1, x)
        }
    }

    fn reference(&self) -> Option<f64> {
        (self.levels == 4).then_some(ELLIPTIC_REFERENCE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_coefficient_is_exact() {
        let p = Elliptic::new(4);
        let x = [0.5; 8];
        for l in 0..4 {
            assert!((p.q(l, &x) - 0.125).abs() < 1e-15, "level {l}");
        }
        assert!(p.eval(3, &x).abs() < 1e-15);
        for m in [2, 6, 64] {
            assert!((solve_midpoint(&vec![3.0; m]) - 0.125 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn dense_solve_agrees() {
        use nalgebra::{DMatrix, DVector};
        let coef: Vec<f64> = (0..16).map(|k| 1.0 + 0.3 * (k as f64).sin()).collect();
        let n = 15;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                coef[i] + coef[i + 1]
            } else if j + 1 == i {
                -coef[i]
            } else if i + 1 == j {
                -coef[j]
            } else {
                0.0
            }
        });
        let b = DVector::from_element(n, 1.0 / 256.0);
        let q = a.lu().solve(&b).unwrap();
        assert!((q[7] - solve_midpoint(&coef)).abs() < 1e-14);
    }

    #[test]
    fn second_order_convergence() {
        let a = |u: f64| (0.7 * (PI * u).sin() - 0.4 * (3.0 * PI * u).sin()).exp();
        let solve = |m: usize| {
            let coef: Vec<f64> = (0..m).map(|k| a((k as f64 + 0.5) / m as f64)).collect();
            solve_midpoint(&coef)
        };
        let fine = solve(1 << 14);
        let errs: Vec<f64> = (4..9).map(|p| (solve(1 << p) - fine).abs()).collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn costs_and_meshes() {
        let p = Elliptic::new(4);
        assert_eq!(Elliptic::cells(0), 4);
        assert_eq!(Elliptic::cells(3), 32);
        assert_eq!(p.cost(0), 0.125);
        assert_eq!(p.cost(3), 1.0);
        assert_eq!(p.reference(), Some(ELLIPTIC_REFERENCE));
    }
}
