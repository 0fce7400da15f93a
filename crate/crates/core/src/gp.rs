//! Fast Gaussian-process algebra on low-discrepancy designs.
//!
//! With a matched kernel / point-set pair the Gram matrix factors as
//! `K = E diag(lambda) E^H` where `E^H` is the orthonormal FWHT (nets) or FFTBR
//! (lattices). Everything here works with the unscaled kernel `K / gamma`
//! through the column `k_i - 1 = prod_j (1 + eta_j R_ij) - 1`, which keeps the
//! small eigenvalues accurate when the kernel is close to constant.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{combine_tables, univariate, KernelFamily, KernelParams};
use crate::ld::{Generator, SeqKind};
use crate::transforms::{fwht, FftbrPlan};

/// Posterior mean and variance of the integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubatureResult {
    pub mu_hat: f64,
    pub v_hat: f64,
}

/// Eigenvalues `sqrt(n) E^H k` of the Gram matrix with first column `column`.
///
/// Lattice eigenvalues are complex in general; net eigenvalues are real and
/// returned with zero imaginary part.
pub fn eigenvalues(column: &[f64], kind: SeqKind) -> Result<Vec<Complex64>> {
    let n = column.len();
    let rn = (n as f64).sqrt();
    let lam: Vec<Complex64> = match kind {
        SeqKind::Net => {
            let mut a = column.to_vec();
            fwht(&mut a)?;
            a.into_iter().map(|v| Complex64::new(rn * v, 0.0)).collect()
        }
        SeqKind::Lattice => {
            let mut a: Vec<Complex64> = column.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            FftbrPlan::new(n)?.forward(&mut a)?;
            a.into_iter().map(|v| v * rn).collect()
        }
    };
    let max = lam.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let min = lam.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if !(min >= 1e-14 * max) || max == 0.0 {
        return Err(Error::IllConditioned {
            ratio: if max > 0.0 { min / max } else { 0.0 },
        });
    }
    Ok(lam)
}

/// `K^{-1} a` from the eigenvalues of `K`.
pub fn solve(lambda: &[Complex64], kind: SeqKind, a: &[f64]) -> Result<Vec<f64>> {
    let n = lambda.len();
    if a.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.len(),
        });
    }
    if lambda.iter().any(|z| z.norm() == 0.0) {
        return Err(Error::IllConditioned { ratio: 0.0 });
    }
    match kind {
        SeqKind::Net => {
            let mut b = a.to_vec();
            fwht(&mut b)?;
            for (v, l) in b.iter_mut().zip(lambda) {
                *v /= l.re;
            }
            fwht(&mut b)?;
            Ok(b)
        }
        SeqKind::Lattice => {
            let plan = FftbrPlan::new(n)?;
            let mut b: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            plan.forward(&mut b)?;
            for (v, l) in b.iter_mut().zip(lambda) {
                *v /= l;
            }
            plan.inverse(&mut b)?;
            Ok(b.into_iter().map(|z| z.re).collect())
        }
    }
}

/// Knobs for hyperparameter fitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpOptions {
    /// Added to every eigenvalue of the unscaled kernel.
    pub nugget: f64,
    /// Descent iterations for the first fit of a level.
    pub first_iters: usize,
    /// Descent iterations for each later (warm-started) fit.
    pub iters: usize,
    /// Stop after this many iterations without a relative improvement of `rel_tol`.
    pub patience: usize,
    pub rel_tol: f64,
    /// Initial Rprop step in the unconstrained parameters.
    pub lr: f64,
    /// Optimize the DSI smoothness weights as well as the lengthscales.
    pub optimize_beta: bool,
    /// Also refit from the initial parameters on every refit.
    pub restart: bool,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self {
            nugget: 1e-10,
            first_iters: 200,
            iters: 40,
            patience: 8,
            rel_tol: 1e-5,
            lr: 0.1,
            optimize_beta: true,
            restart: true,
        }
    }
}

const RHO_BOUNDS: (f64, f64) = (-25.0, 8.0);
const B_BOUNDS: (f64, f64) = (-25.0, 10.0);
const RPROP_ETAS: (f64, f64) = (0.5, 1.2);
const RPROP_STEPS: (f64, f64) = (1e-6, 10.0);

fn softplus(b: f64) -> f64 {
    if b > 30.0 {
        b
    } else {
        b.exp().ln_1p()
    }
}

fn softplus_inv(beta: f64) -> f64 {
    if beta > 30.0 {
        beta
    } else {
        beta.exp_m1().ln()
    }
}

fn sigmoid(b: f64) -> f64 {
    1.0 / (1.0 + (-b).exp())
}

/// Fitted GP for one level: design, data, hyperparameters and the diagonalized
/// Gram matrix.
#[derive(Clone, Debug)]
pub struct GpLevelState {
    generator: Generator,
    family: KernelFamily,
    nugget: f64,
    d: usize,
    tables: Vec<(u8, Vec<f64>)>,
    y: Vec<f64>,
    pub params: KernelParams,
    plan: Option<FftbrPlan>,
    // derived from params
    km1: Vec<f64>,
    lambda: Vec<f64>,
    // E^H y, before centering
    y_hat: Vec<Complex64>,
    fitted_once: bool,
    // S_{2^p} = sum_{i < 2^p} (k_i - 1) for p = 0, 1, ...
    pow2_sums: Vec<f64>,
}

impl GpLevelState {
    /// An empty state over the unshifted sequence of `generator`.
    pub fn new(generator: Generator, family: KernelFamily, nugget: f64) -> Result<Self> {
        if family.seq_kind() != generator.kind() {
            return Err(Error::KernelSequenceMismatch(match family {
                KernelFamily::Si { .. } => "SI kernels require a lattice",
                KernelFamily::DsiWeighted => "DSI kernels require a digital net",
            }));
        }
        if !(nugget >= 0.0 && nugget.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "nugget {nugget} must be >= 0"
            )));
        }
        let d = generator.d();
        let mut params = KernelParams::new(family, d);
        params.eta = vec![1.0 / d as f64; d];
        params.validate()?;
        Ok(Self {
            generator,
            family,
            nugget,
            d,
            tables: family
                .orders()
                .into_iter()
                .map(|a| (a, Vec::new()))
                .collect(),
            y: Vec::new(),
            params,
            plan: None,
            km1: Vec::new(),
            lambda: Vec::new(),
            y_hat: Vec::new(),
            fitted_once: false,
            pow2_sums: Vec::new(),
        })
    }

    pub fn kind(&self) -> SeqKind {
        self.generator.kind()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// Eigenvalues of the unscaled kernel plus nugget.
    pub fn lambda_unscaled(&self) -> &[f64] {
        &self.lambda
    }

    /// Eigenvalues of the scaled Gram matrix `gamma (K/gamma + nugget I)`.
    pub fn lambda(&self) -> Vec<f64> {
        self.lambda.iter().map(|&l| self.params.gamma * l).collect()
    }

    /// `E^H (y - tau 1)`.
    pub fn y_tilde(&self) -> Vec<Complex64> {
        let mut out = self.y_hat.clone();
        if let Some(first) = out.first_mut() {
            *first -= Complex64::new(self.params.tau * (self.n() as f64).sqrt(), 0.0);
        }
        out
    }

    /// Unshifted integer coordinates of sequence indices `a..b`, row-major.
    pub fn design_ints(&self, a: u64, b: u64) -> Result<Vec<u64>> {
        match &self.generator {
            Generator::Lattice(g) => {
                crate::ld::lattice_points_fixed(g, &crate::ld::Shift::zero_modular(self.d), a, b)
            }
            Generator::Net(g) => g.points_int(a, b),
        }
    }

    /// Digit precision of the design (64 for lattices).
    pub fn bits(&self) -> u32 {
        match &self.generator {
            Generator::Lattice(_) => 64,
            Generator::Net(g) => g.t(),
        }
    }

    /// Append integrand values for the next sequence indices. The new size
    /// must be a power of two. Refreshes eigenvalues for the current
    /// hyperparameters.
    pub fn append(&mut self, y_new: &[f64]) -> Result<()> {
        let n0 = self.n() as u64;
        let n1 = n0 + y_new.len() as u64;
        if !n1.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n1 as usize));
        }
        let ints = self.design_ints(n0, n1)?;
        let kind = self.kind();
        let t = self.bits();
        for (a, tab) in self.tables.iter_mut() {
            tab.extend(ints.iter().map(|&z| univariate(kind, *a, z, t)));
        }
        self.y.extend_from_slice(y_new);
        if self.plan.as_ref().map_or(true, |p| p.len() != n1 as usize) && kind == SeqKind::Lattice {
            self.plan = Some(FftbrPlan::new(n1 as usize)?);
        }
        self.y_hat = self.forward_real(&self.y)?;
        self.refresh()
    }

    fn forward_real(&self, a: &[f64]) -> Result<Vec<Complex64>> {
        match self.kind() {
            SeqKind::Net => {
                let mut b = a.to_vec();
                fwht(&mut b)?;
                Ok(b.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
            }
            SeqKind::Lattice => {
                let mut b: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                self.plan.as_ref().expect("plan").forward(&mut b)?;
                Ok(b)
            }
        }
    }

    /// `sqrt(n) E^H a` for real `a`, real part.
    fn eig_transform(&self, a: &[f64]) -> Result<Vec<f64>> {
        let rn = (a.len() as f64).sqrt();
        Ok(match self.kind() {
            SeqKind::Net => {
                let mut b = a.to_vec();
                fwht(&mut b)?;
                b.iter_mut().for_each(|v| *v *= rn);
                b
            }
            SeqKind::Lattice => {
                let b = self.forward_real(a)?;
                let scale = b
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max)
                    .max(f64::MIN_POSITIVE);
                debug_assert!(
                    b.iter().all(|z| z.im.abs() <= 1e-8 * scale + 1e-300),
                    "lattice eigenvalues not real"
                );
                b.into_iter().map(|z| rn * z.re).collect()
            }
        })
    }

    /// `sqrt(n) Re(E^T w)`: maps eigenvalue sensitivities back to column space.
    fn adjoint_transform(&self, w: &[f64]) -> Result<Vec<f64>> {
        let rn = (w.len() as f64).sqrt();
        Ok(match self.kind() {
            SeqKind::Net => {
                let mut b = w.to_vec();
                fwht(&mut b)?;
                b.iter_mut().for_each(|v| *v *= rn);
                b
            }
            SeqKind::Lattice => {
                let mut b: Vec<Complex64> = w.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                self.plan.as_ref().expect("plan").inverse(&mut b)?;
                b.into_iter().map(|z| rn * z.re).collect()
            }
        })
    }

    /// `k_i - 1` over the current design for the given parameters.
    fn km1_for(&self, params: &KernelParams) -> Vec<f64> {
        self.km1_from(params, &combine_tables(params, &self.tables))
    }

    /// `k_i - 1` from combined univariate values `r`, row-major `n x d`.
    fn km1_from(&self, params: &KernelParams, r: &[f64]) -> Vec<f64> {
        r.chunks_exact(self.d)
            .map(|row| {
                row.iter().zip(&params.eta).fold(0.0, |p, (&rij, &e)| {
                    let a = e * rij;
                    p * (1.0 + a) + a
                })
            })
            .collect()
    }

    fn lambda_from_km1(&self, km1: &[f64]) -> Result<Vec<f64>> {
        let n = km1.len() as f64;
        let mut lam = self.eig_transform(km1)?;
        lam[0] += n;
        for l in lam.iter_mut() {
            *l = l.max(0.0) + self.nugget;
        }
        Ok(lam)
    }

    /// Recompute the column, eigenvalues and cached sums for `self.params`.
    pub fn refresh(&mut self) -> Result<()> {
        self.params.validate()?;
        if self.n() == 0 {
            return Ok(());
        }
        self.km1 = self.km1_for(&self.params);
        self.lambda = self.lambda_from_km1(&self.km1)?;
        if self.lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            let max = self.lambda.iter().cloned().fold(0.0, f64::max);
            let min = self.lambda.iter().cloned().fold(f64::INFINITY, f64::min);
            return Err(Error::IllConditioned { ratio: min / max });
        }
        self.pow2_sums.clear();
        let mut s = 0.0;
        let mut next = 1usize;
        for (i, &v) in self.km1.iter().enumerate() {
            s += v;
            if i + 1 == next {
                self.pow2_sums.push(s);
                next *= 2;
            }
        }
        Ok(())
    }

    /// Sample mean of the data.
    pub fn sample_mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.n() as f64
    }

    /// `sum |y~_i|^2 / lambda~_i` for the unscaled kernel at the given tau.
    fn quad_unscaled(&self, lambda: &[f64], tau: f64) -> f64 {
        let c0 = tau * (self.n() as f64).sqrt();
        self.y_hat
            .iter()
            .zip(lambda)
            .enumerate()
            .map(|(i, (z, &l))| {
                let z = if i == 0 { *z - c0 } else { *z };
                z.norm_sqr() / l
            })
            .sum()
    }

    /// Quadratic form `(y - tau)^T K^{-1} (y - tau)` with the current parameters.
    pub fn quadratic_form(&self) -> f64 {
        self.quad_unscaled(&self.lambda, self.params.tau) / self.params.gamma
    }

    /// `sum log lambda_i + (y - tau)^T K^{-1} (y - tau)` for the current parameters.
    pub fn nmll(&self) -> Result<f64> {
        if self.n() == 0 {
            return Err(Error::InvalidParameter("empty GP".into()));
        }
        let g = self.params.gamma;
        let logdet: f64 = self.lambda.iter().map(|&l| (g * l).ln()).sum();
        let quad = self.quadratic_form();
        if quad < -1e-10 {
            return Err(Error::IllConditioned { ratio: quad });
        }
        Ok(logdet + quad)
    }

    /// NMLL at `tau` = sample mean and `gamma` = its closed-form minimizer.
    pub fn profiled_nmll(&self) -> f64 {
        let n = self.n() as f64;
        let q1 = self
            .quad_unscaled(&self.lambda, self.sample_mean())
            .max(n * f64::MIN_POSITIVE);
        n * (q1 / n).ln() + self.lambda.iter().map(|l| l.ln()).sum::<f64>() + n
    }

    /// Profiled NMLL and its gradient with respect to `(log eta, b)` where
    /// `beta = softplus(b)`; the `b` block is present only when requested.
    fn profiled_with_grad(
        &self,
        params: &KernelParams,
        with_beta: bool,
    ) -> Result<(f64, Vec<f64>, f64)> {
        let n = self.n();
        let nf = n as f64;
        let r = combine_tables(params, &self.tables);
        let km1 = self.km1_from(params, &r);
        let lam = self.lambda_from_km1(&km1)?;
        let tau = self.sample_mean();
        let c0 = tau * nf.sqrt();
        let ysq: Vec<f64> = self
            .y_hat
            .iter()
            .enumerate()
            .map(|(i, z)| {
                if i == 0 {
                    (*z - c0).norm_sqr()
                } else {
                    z.norm_sqr()
                }
            })
            .collect();
        let q1 = ysq
            .iter()
            .zip(&lam)
            .map(|(y, l)| y / l)
            .sum::<f64>()
            .max(nf * f64::MIN_POSITIVE);
        let loss = nf * (q1 / nf).ln() + lam.iter().map(|l| l.ln()).sum::<f64>() + nf;
        let w: Vec<f64> = ysq
            .iter()
            .zip(&lam)
            .map(|(y, l)| 1.0 / l - nf * y / (q1 * l * l))
            .collect();
        let u = self.adjoint_transform(&w)?;

        let d = self.d;
        let n_beta = if with_beta { 4 } else { 0 };
        let mut grad = vec![0.0; d + n_beta];
        let mut a = vec![0.0; d];
        let mut loo = vec![0.0; d];
        let mut pre = vec![0.0; d + 1];
        for (i, row) in r.chunks_exact(d).enumerate() {
            let ui = u[i];
            if ui == 0.0 {
                continue;
            }
            for ((aj, &rj), &e) in a.iter_mut().zip(row).zip(&params.eta) {
                *aj = e * rj;
            }
            pre[0] = ui;
            for j in 0..d {
                pre[j + 1] = pre[j] * (1.0 + a[j]);
            }
            let mut suf = 1.0;
            for j in (0..d).rev() {
                loo[j] = pre[j] * suf;
                suf *= 1.0 + a[j];
            }
            for ((g, &aj), &l) in grad[..d].iter_mut().zip(&a).zip(&loo) {
                *g += aj * l;
            }
            if with_beta {
                for (l, &e) in loo.iter_mut().zip(&params.eta) {
                    *l *= e;
                }
                for (al, tab) in &self.tables {
                    let dot: f64 = tab[i * d..(i + 1) * d]
                        .iter()
                        .zip(&loo)
                        .map(|(t, l)| t * l)
                        .sum();
                    grad[d + *al as usize - 1] += dot;
                }
            }
        }
        if with_beta {
            for k in 0..4 {
                grad[d + k] *= sigmoid(softplus_inv(params.beta[k]));
            }
        }
        Ok((loss, grad, q1))
    }

    fn to_theta(&self, params: &KernelParams, with_beta: bool) -> Vec<f64> {
        let mut th: Vec<f64> = params.eta.iter().map(|e| e.ln()).collect();
        if with_beta {
            th.extend(params.beta.iter().map(|&b| softplus_inv(b.max(1e-300))));
        }
        th
    }

    fn from_theta(&self, th: &[f64], with_beta: bool) -> KernelParams {
        let mut p = self.params.clone();
        p.eta = th[..self.d].iter().map(|r| r.exp()).collect();
        if with_beta {
            for k in 0..4 {
                p.beta[k] = softplus(th[self.d + k]).max(1e-300);
            }
        }
        p
    }

    fn clamp_theta(&self, th: &mut [f64]) {
        let d = self.d;
        for (k, v) in th.iter_mut().enumerate() {
            let (lo, hi) = if k < d { RHO_BOUNDS } else { B_BOUNDS };
            *v = v.clamp(lo, hi);
        }
    }

    /// Fit `tau`, `gamma` in closed form and descend on the rest. Returns the
    /// fitted parameters (also stored in the state).
    ///
    /// Refits start from the previous parameters and, when `opts.restart` is
    /// set, also from the initial ones; the lower profiled NMLL wins.
    pub fn optimize_hyperparameters(&mut self, opts: &GpOptions) -> Result<KernelParams> {
        if self.n() < 2 {
            return Err(Error::InvalidParameter(
                "need at least two points to fit".into(),
            ));
        }
        let with_beta = opts.optimize_beta && self.family == KernelFamily::DsiWeighted;
        let mut best = if self.fitted_once {
            let warm = self.to_theta(&self.params, with_beta);
            self.descend(warm, opts.iters, opts, with_beta)?
        } else {
            (f64::INFINITY, Vec::new())
        };
        if !self.fitted_once || opts.restart {
            let cold = self.to_theta(&self.initial_params(), with_beta);
            match self.descend(cold, opts.first_iters, opts, with_beta) {
                Ok(c) if c.0 < best.0 => best = c,
                Ok(_) => {}
                Err(e) if !best.0.is_finite() => return Err(e),
                Err(_) => {}
            }
        }
        self.params = self.from_theta(&best.1, with_beta);
        self.set_closed_form()?;
        self.fitted_once = true;
        Ok(self.params.clone())
    }

    fn initial_params(&self) -> KernelParams {
        let mut p = KernelParams::new(self.family, self.d);
        p.eta = vec![1.0 / self.d as f64; self.d];
        p
    }

    /// Rprop on the profiled NMLL from `theta`; returns the best loss and point.
    fn descend(
        &self,
        mut theta: Vec<f64>,
        iters: usize,
        opts: &GpOptions,
        with_beta: bool,
    ) -> Result<(f64, Vec<f64>)> {
        self.clamp_theta(&mut theta);
        let mut step = vec![opts.lr; theta.len()];
        let mut prev_sign = vec![0.0f64; theta.len()];
        let (mut loss, mut grad, _) =
            self.profiled_with_grad(&self.from_theta(&theta, with_beta), with_beta)?;
        if !loss.is_finite() {
            return Err(Error::IllConditioned { ratio: f64::NAN });
        }
        let mut best = (loss, theta.clone());
        let mut stale = 0usize;
        for _ in 0..iters {
            let mut trial = theta.clone();
            for k in 0..theta.len() {
                let s = grad[k].signum() * if grad[k] == 0.0 { 0.0 } else { 1.0 };
                if s * prev_sign[k] > 0.0 {
                    step[k] = (step[k] * RPROP_ETAS.1).min(RPROP_STEPS.1);
                    prev_sign[k] = s;
                } else if s * prev_sign[k] < 0.0 {
                    step[k] = (step[k] * RPROP_ETAS.0).max(RPROP_STEPS.0);
                    prev_sign[k] = 0.0;
                    continue;
                } else {
                    prev_sign[k] = s;
                }
                trial[k] -= s * step[k];
            }
            self.clamp_theta(&mut trial);
            let cand = self.from_theta(&trial, with_beta);
            match self.profiled_with_grad(&cand, with_beta) {
                Ok((l, g, _)) if l.is_finite() && g.iter().all(|v| v.is_finite()) => {
                    theta = trial;
                    loss = l;
                    grad = g;
                }
                _ => {
                    // revert and take smaller steps
                    step.iter_mut()
                        .for_each(|s| *s = (*s * RPROP_ETAS.0).max(RPROP_STEPS.0));
                    prev_sign.iter_mut().for_each(|s| *s = 0.0);
                    stale += 1;
                    if stale >= opts.patience {
                        break;
                    }
                    continue;
                }
            }
            if best.0 - loss > opts.rel_tol * best.0.abs().max(1.0) {
                stale = 0;
            } else {
                stale += 1;
            }
            if loss < best.0 {
                best = (loss, theta.clone());
            }
            if stale >= opts.patience {
                break;
            }
        }
        Ok(best)
    }

    /// Set `tau` to the sample mean and `gamma` to the NMLL minimizer for the
    /// current lengthscales and weights.
    pub fn set_closed_form(&mut self) -> Result<()> {
        self.params.gamma = 1.0;
        self.refresh()?;
        self.params.tau = self.sample_mean();
        let n = self.n() as f64;
        let q1 = self.quad_unscaled(&self.lambda, self.params.tau);
        self.params.gamma = (q1 / n).max(f64::MIN_POSITIVE);
        Ok(())
    }

    /// Change the kernel parameters and refresh.
    pub fn set_params(&mut self, params: KernelParams) -> Result<()> {
        if params.d() != self.d || params.family != self.family {
            return Err(Error::InvalidParameter(
                "parameters do not match the state".into(),
            ));
        }
        self.params = params;
        self.refresh()
    }

    /// `K^{-1} a` with `K = gamma (K/gamma + nugget I)`.
    pub fn solve(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: a.len(),
            });
        }
        let g = self.params.gamma;
        let b = self.forward_real(a)?;
        let mut b: Vec<Complex64> = b
            .into_iter()
            .zip(&self.lambda)
            .map(|(z, &l)| z / (g * l))
            .collect();
        match self.kind() {
            SeqKind::Net => {
                let mut r: Vec<f64> = b.iter().map(|z| z.re).collect();
                fwht(&mut r)?;
                Ok(r)
            }
            SeqKind::Lattice => {
                self.plan.as_ref().expect("plan").inverse(&mut b)?;
                Ok(b.into_iter().map(|z| z.re).collect())
            }
        }
    }

    fn variance_from_sum(&self, m: f64, s: f64) -> f64 {
        let v = self.params.gamma * (s + self.nugget) / (m + s + self.nugget);
        if v < 0.0 {
            log::warn!("negative posterior variance {v:e} clamped to zero");
            0.0
        } else {
            v
        }
    }

    /// Posterior mean (the sample mean) and variance of the integral.
    pub fn posterior_cubature(&self) -> CubatureResult {
        let n = self.n();
        let s: f64 = self.km1.iter().sum();
        CubatureResult {
            mu_hat: self.sample_mean(),
            v_hat: self.variance_from_sum(n as f64, s),
        }
    }

    /// Make sure `S_{2^p}` is cached for every `p <= p_max`.
    fn extend_sums(&mut self, p_max: u32) -> Result<()> {
        let max_pts = self.generator.max_points();
        while (self.pow2_sums.len() as u32) <= p_max {
            let p = self.pow2_sums.len() as u32;
            let end = 1u64 << p;
            if end > max_pts {
                return Err(Error::TooManyPoints {
                    index: end - 1,
                    max: max_pts,
                });
            }
            let start = if p == 0 { 0 } else { 1u64 << (p - 1) };
            let mut s = self.pow2_sums.last().copied().unwrap_or(0.0);
            const CHUNK: u64 = 1 << 12;
            let mut a = start;
            let kind = self.kind();
            let t = self.bits();
            while a < end {
                let b = (a + CHUNK).min(end);
                let ints = self.design_ints(a, b)?;
                for row in ints.chunks_exact(self.d) {
                    let mut prod = 0.0;
                    for (j, &z) in row.iter().enumerate() {
                        let r: f64 = self
                            .tables
                            .iter()
                            .map(|(al, _)| {
                                self.params.order_weight(*al) * univariate(kind, *al, z, t)
                            })
                            .sum();
                        let aij = self.params.eta[j] * r;
                        prod = prod * (1.0 + aij) + aij;
                    }
                    s += prod;
                }
                a = b;
            }
            self.pow2_sums.push(s);
        }
        Ok(())
    }

    /// Posterior variance the current hyperparameters would give with the
    /// first `2^p` points.
    pub fn variance_at_pow2(&mut self, p: u32) -> Result<f64> {
        self.extend_sums(p)?;
        Ok(self.variance_from_sum((1u64 << p) as f64, self.pow2_sums[p as usize]))
    }

    /// Posterior variance projected to `n_hat` samples with frozen
    /// hyperparameters: exact at powers of two, log-log interpolated between.
    pub fn projected_variance(&mut self, n_hat: f64) -> Result<f64> {
        if !(n_hat >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "n_hat={n_hat} must be >= 1"
            )));
        }
        let lg = n_hat.log2();
        let mut p = lg.floor() as u32;
        let cap = self.generator.max_points().ilog2();
        if (1u64 << p.min(63)) as f64 == n_hat && p <= cap {
            return self.variance_at_pow2(p);
        }
        // beyond the generator, extrapolate along the last available segment
        if p + 1 > cap {
            p = cap - 1;
        }
        let v0 = self.variance_at_pow2(p)?;
        let v1 = self.variance_at_pow2(p + 1)?;
        Ok(loglog_interpolate(p, v0, v1, n_hat))
    }
}

/// `V_p^{p+1} / V_{p+1}^p * n^{log2(V_{p+1}/V_p)}` evaluated in log space.
pub fn loglog_interpolate(p: u32, v_p: f64, v_p1: f64, n_hat: f64) -> f64 {
    let lg = n_hat.log2();
    if v_p > 0.0 && v_p1 > 0.0 {
        let (a, b) = (v_p.log2(), v_p1.log2());
        let pf = p as f64;
        ((pf + 1.0) * a - pf * b + lg * (b - a)).exp2()
    } else {
        let frac = lg - p as f64;
        (v_p + frac * (v_p1 - v_p)).max(0.0)
    }
}
