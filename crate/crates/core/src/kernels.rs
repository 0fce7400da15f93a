//! Shift-invariant and digitally-shift-invariant product kernels.
//!
//! Points enter as integers: lattice coordinates as 64-bit binary fractions,
//! net coordinates as `t`-bit integers. Differences are then exact
//! (wrapping subtraction or XOR), which is what makes the Gram matrices
//! structured.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ld::{digital_to_f64, fixed_to_f64, SeqKind};

/// Diagonal values of the univariate DSI kernels, orders 1 to 4.
pub const DSI_DIAGONAL: [f64; 4] = [1.0, 1.5, 25.0 / 18.0, 407.0 / 294.0];

/// Kernel family: SI of a fixed order (lattices) or the weighted DSI sum (nets).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelFamily {
    Si { alpha: u8 },
    DsiWeighted,
}

impl KernelFamily {
    /// The point family this kernel is matched to.
    pub fn seq_kind(self) -> SeqKind {
        match self {
            KernelFamily::Si { .. } => SeqKind::Lattice,
            KernelFamily::DsiWeighted => SeqKind::Net,
        }
    }

    /// The default family for a point family.
    pub fn default_for(kind: SeqKind) -> Self {
        match kind {
            SeqKind::Lattice => KernelFamily::Si { alpha: 1 },
            SeqKind::Net => KernelFamily::DsiWeighted,
        }
    }

    /// Orders whose univariate tables a fit needs.
    pub fn orders(self) -> Vec<u8> {
        match self {
            KernelFamily::Si { alpha } => vec![alpha],
            KernelFamily::DsiWeighted => vec![1, 2, 3, 4],
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::Si { alpha } => write!(f, "si{alpha}"),
            KernelFamily::DsiWeighted => f.write_str("dsi"),
        }
    }
}

impl FromStr for KernelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dsi" => Ok(KernelFamily::DsiWeighted),
            "si1" => Ok(KernelFamily::Si { alpha: 1 }),
            "si2" => Ok(KernelFamily::Si { alpha: 2 }),
            "si3" => Ok(KernelFamily::Si { alpha: 3 }),
            "si4" => Ok(KernelFamily::Si { alpha: 4 }),
            _ => Err(Error::Unknown {
                kind: "kernel family",
                name: s.to_string(),
            }),
        }
    }
}

impl TryFrom<String> for KernelFamily {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelFamily> for String {
    fn from(k: KernelFamily) -> String {
        k.to_string()
    }
}

/// Hyperparameters of the product kernel and the GP prior mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub family: KernelFamily,
    pub gamma: f64,
    pub eta: Vec<f64>,
    pub tau: f64,
    pub beta: [f64; 4],
}

impl KernelParams {
    pub fn new(family: KernelFamily, d: usize) -> Self {
        Self {
            family,
            gamma: 1.0,
            eta: vec![1.0; d],
            tau: 0.0,
            beta: [1.0; 4],
        }
    }

    pub fn d(&self) -> usize {
        self.eta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma={} must be positive",
                self.gamma
            )));
        }
        if let Some(e) = self.eta.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidParameter(format!("eta={e} must be positive")));
        }
        if !self.tau.is_finite() {
            return Err(Error::InvalidParameter("tau must be finite".into()));
        }
        match self.family {
            KernelFamily::Si { alpha } if !(1..=4).contains(&alpha) => Err(
                Error::InvalidParameter(format!("SI order {alpha} not in 1..=4")),
            ),
            KernelFamily::Si { .. } => Ok(()),
            KernelFamily::DsiWeighted => check_beta(&self.beta),
        }
    }

    /// Weight applied to the order-`alpha` univariate table.
    pub fn order_weight(&self, alpha: u8) -> f64 {
        match self.family {
            KernelFamily::Si { .. } => 1.0,
            KernelFamily::DsiWeighted => self.beta[alpha as usize - 1],
        }
    }
}

fn check_beta(beta: &[f64; 4]) -> Result<()> {
    if beta.iter().any(|&b| !(b >= 0.0 && b.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "beta={beta:?} must be nonnegative"
        )));
    }
    if beta.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidParameter("beta must not be all zero".into()));
    }
    Ok(())
}

/// Bernoulli polynomial `B_p(x)` for even `p` in 2..=8.
pub fn bernoulli_poly(p: u32, x: f64) -> Result<f64> {
    let x2 = x * x;
    Ok(match p {
        2 => x2 - x + 1.0 / 6.0,
        4 => x2 * (x2 - 2.0 * x + 1.0) - 1.0 / 30.0,
        6 => x2 * (x2 * (x2 - 3.0 * x + 2.5) - 0.5) + 1.0 / 42.0,
        8 => x2 * (x2 * (x2 * (x2 - 4.0 * x + 14.0 / 3.0) - 7.0 / 3.0) + 2.0 / 3.0) - 1.0 / 30.0,
        _ => {
            return Err(Error::InvalidParameter(format!(
                "Bernoulli polynomial of order {p} is not supported"
            )))
        }
    })
}

const SI_SCALE: [f64; 4] = {
    // (2 pi)^{2a} / (2a)!, signed (-1)^{a+1}
    let tp2 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
    [
        tp2 / 2.0,
        -tp2 * tp2 / 24.0,
        tp2 * tp2 * tp2 / 720.0,
        -tp2 * tp2 * tp2 * tp2 / 40320.0,
    ]
};

/// Univariate shift-invariant kernel of order `alpha` at `x` in `[0, 1)`.
///
/// # Panics
/// If `alpha` is not in 1..=4.
pub fn si_univariate(alpha: u8, x: f64) -> f64 {
    assert!((1..=4).contains(&alpha), "SI order {alpha} not in 1..=4");
    SI_SCALE[alpha as usize - 1] * bernoulli_poly(2 * alpha as u32, x).unwrap()
}

/// Univariate DSI kernel of order `alpha` at the `t`-bit dyadic `bits / 2^t`.
///
/// # Panics
/// If `alpha` is not in 1..=4.
pub fn dsi_univariate_bits(alpha: u8, bits: u64, t: u32) -> f64 {
    assert!((1..=4).contains(&alpha), "DSI order {alpha} not in 1..=4");
    if bits == 0 {
        return DSI_DIAGONAL[alpha as usize - 1];
    }
    let lead = bits.leading_zeros() - (64 - t);
    let beta = (lead + 1) as f64;
    let t1 = pow2_neg(lead + 1);
    let x = digital_to_f64(bits, t);
    match alpha {
        1 => 1.0 - 3.0 * t1,
        2 => -1.0 - beta * x + 2.5 * (1.0 - t1),
        3 => -1.0 + beta * x * x - 5.0 * (1.0 - t1) * x + 43.0 / 18.0 * (1.0 - t1 * t1),
        _ => {
            // signed digit sum over all digits, zeros past t included exactly
            let mut s = 8.0 / 7.0;
            let mut rest = bits;
            while rest != 0 {
                let a = (t - 1 - (63 - rest.leading_zeros())) as i32;
                s -= 2.0 * pow2_neg(3 * a as u32);
                rest &= !(1u64 << (63 - rest.leading_zeros()));
            }
            let t2 = t1 * t1;
            -1.0 - 2.0 / 3.0 * beta * x * x * x + 5.0 * (1.0 - t1) * x * x
                - 43.0 / 9.0 * (1.0 - t2) * x
                + 701.0 / 294.0 * (1.0 - t2 * t1)
                + beta * (s / 48.0 - 1.0 / 42.0)
        }
    }
}

/// `2^-k` for `k < 1023`.
#[inline]
fn pow2_neg(k: u32) -> f64 {
    f64::from_bits(((1023 - k) as u64) << 52)
}

/// Univariate DSI kernel at a dyadic `x` in `[0, 1)` representable in 53 bits.
pub fn dsi_univariate(alpha: u8, x: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&x));
    dsi_univariate_bits(alpha, (x * (1u64 << 53) as f64) as u64, 53)
}

/// Weighted DSI kernel `sum_a beta_a R_a(x)`.
pub fn dsi_weighted(beta: &[f64; 4], x: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok((1..=4u8)
        .map(|a| beta[a as usize - 1] * dsi_univariate(a, x))
        .sum())
}

/// Unshifted coordinates of one point set in the integer form the kernels use.
#[derive(Clone, Copy, Debug)]
pub struct DesignInts<'a> {
    pub kind: SeqKind,
    /// Row-major `n x d`: 64-bit fractions for lattices, `t`-bit integers for nets.
    pub data: &'a [u64],
    pub d: usize,
    /// Bits per coordinate; 64 for lattices.
    pub t: u32,
}

impl DesignInts<'_> {
    pub fn n(&self) -> usize {
        if self.d == 0 {
            0
        } else {
            self.data.len() / self.d
        }
    }
}

/// Univariate kernel value of order `alpha` at the integer difference `z`.
pub fn univariate(kind: SeqKind, alpha: u8, z: u64, t: u32) -> f64 {
    match kind {
        SeqKind::Lattice => si_univariate(alpha, fixed_to_f64(z)),
        SeqKind::Net => dsi_univariate_bits(alpha, z, t),
    }
}

/// Tables `R_alpha(z_ij)` for every order the family needs, each row-major
/// `n x d`. They do not depend on the hyperparameters.
pub fn univariate_tables(family: KernelFamily, z: DesignInts<'_>) -> Result<Vec<(u8, Vec<f64>)>> {
    if family.seq_kind() != z.kind {
        return Err(Error::KernelSequenceMismatch(match family {
            KernelFamily::Si { .. } => "SI kernels require a lattice",
            KernelFamily::DsiWeighted => "DSI kernels require a digital net",
        }));
    }
    Ok(family
        .orders()
        .into_iter()
        .map(|a| {
            (
                a,
                z.data
                    .iter()
                    .map(|&v| univariate(z.kind, a, v, z.t))
                    .collect(),
            )
        })
        .collect())
}

/// Per-dimension kernel argument difference between two integer points.
#[inline]
fn diff(kind: SeqKind, a: u64, b: u64) -> u64 {
    match kind {
        SeqKind::Lattice => a.wrapping_sub(b),
        SeqKind::Net => a ^ b,
    }
}

/// `K(x, x')` for two points given in integer form.
pub fn kernel_pair(
    params: &KernelParams,
    kind: SeqKind,
    x: &[u64],
    xp: &[u64],
    t: u32,
) -> Result<f64> {
    if params.family.seq_kind() != kind {
        return Err(Error::KernelSequenceMismatch(
            "family does not match points",
        ));
    }
    let mut k = params.gamma;
    for (j, (&a, &b)) in x.iter().zip(xp).enumerate() {
        let z = diff(kind, a, b);
        let r: f64 = params
            .family
            .orders()
            .into_iter()
            .map(|al| params.order_weight(al) * univariate(kind, al, z, t))
            .sum();
        k *= 1.0 + params.eta[j] * r;
    }
    Ok(k)
}

/// Weighted univariate values `R(z_ij)` combined from cached tables.
pub fn combine_tables(params: &KernelParams, tables: &[(u8, Vec<f64>)]) -> Vec<f64> {
    let len = tables.first().map_or(0, |t| t.1.len());
    let mut out = vec![0.0; len];
    for (a, tab) in tables {
        let w = params.order_weight(*a);
        if w != 0.0 {
            for (o, &v) in out.iter_mut().zip(tab) {
                *o += w * v;
            }
        }
    }
    out
}

/// First Gram column `K(z_i, 0)` over the unshifted design. Shift
/// cancellation makes this the first column of the shifted Gram matrix too.
pub fn kernel_column(params: &KernelParams, z: DesignInts<'_>) -> Result<Vec<f64>> {
    params.validate()?;
    if params.d() != z.d {
        return Err(Error::DimensionMismatch {
            expected: params.d(),
            got: z.d,
        });
    }
    let tables = univariate_tables(params.family, z)?;
    let r = combine_tables(params, &tables);
    Ok(r.chunks_exact(z.d.max(1))
        .take(z.n())
        .map(|row| {
            row.iter()
                .zip(&params.eta)
                .fold(params.gamma, |k, (&rij, &e)| k * (1.0 + e * rij))
        })
        .collect())
}
