//! Extensible low-discrepancy point sets in radical-inverse order.
//!
//! Rank-1 lattices are generated in 64-bit fixed point so the mod-one shift is
//! an exact wrapping add. Digital nets are generated as `t`-bit integers and
//! shifted by XOR. Both conversions to `f64` happen only at the boundary.

pub mod data;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use data::{default_lattice, default_net, parse_ld_data, parse_ld_str, LdData};

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

/// Which family of point set (and therefore which kernel / transform pair).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeqKind {
    Lattice,
    Net,
}

impl SeqKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeqKind::Lattice => "lattice",
            SeqKind::Net => "net",
        }
    }
}

impl std::fmt::Display for SeqKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SeqKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lattice" => Ok(SeqKind::Lattice),
            "net" => Ok(SeqKind::Net),
            _ => Err(Error::Unknown {
                kind: "sequence",
                name: s.to_string(),
            }),
        }
    }
}

/// Van der Corput radical inverse in base 2.
pub fn radical_inverse(i: u64) -> f64 {
    fixed_to_f64(i.reverse_bits())
}

/// Convert a 64-bit binary fraction to `f64` in `[0, 1)` by truncation.
#[inline]
pub fn fixed_to_f64(x: u64) -> f64 {
    (x >> 11) as f64 * TWO_POW_M53
}

/// Convert a `t`-bit digital-net integer to `f64` in `[0, 1)`.
#[inline]
pub fn digital_to_f64(x: u64, t: u32) -> f64 {
    if t > 53 {
        (x >> (t - 53)) as f64 * TWO_POW_M53
    } else {
        x as f64 / (1u64 << t) as f64
    }
}

/// Row-major `n x d` matrix of points in `[0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    pub n: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl PointSet {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d.max(1)).take(self.n)
    }
}

/// Generating vector of a rank-1 lattice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeGen {
    g: Vec<u64>,
    n_max: u64,
}

impl LatticeGen {
    /// `n_max` is the number of points the vector was designed for; indices at
    /// or beyond it are rejected.
    pub fn new(g: Vec<u64>, n_max: u64) -> Result<Self> {
        if g.is_empty() {
            return Err(Error::InvalidParameter("empty generating vector".into()));
        }
        if g.iter().any(|&x| x == 0) {
            return Err(Error::InvalidParameter(
                "generating vector entries must be >= 1".into(),
            ));
        }
        if n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be positive".into()));
        }
        Ok(Self { g, n_max })
    }

    pub fn d(&self) -> usize {
        self.g.len()
    }

    pub fn g(&self) -> &[u64] {
        &self.g
    }

    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    /// Keep the first `d` components.
    pub fn truncate(&self, d: usize) -> Result<Self> {
        if d > self.d() {
            return Err(Error::TooManyDimensions {
                requested: d,
                available: self.d(),
            });
        }
        Self::new(self.g[..d].to_vec(), self.n_max)
    }

    /// Unshifted point `i` as 64-bit binary fractions, written into `out`.
    #[inline]
    pub fn point_fixed(&self, i: u64, out: &mut [u64]) {
        let v = i.reverse_bits();
        for (o, &gj) in out.iter_mut().zip(&self.g) {
            *o = v.wrapping_mul(gj);
        }
    }

    fn check_range(&self, i_start: u64, i_end: u64) -> Result<()> {
        if i_start > i_end {
            return Err(Error::InvalidParameter(format!(
                "i_start {i_start} > i_end {i_end}"
            )));
        }
        if i_end > self.n_max {
            return Err(Error::TooManyPoints {
                index: i_end - 1,
                max: self.n_max,
            });
        }
        Ok(())
    }
}

/// Generating matrices of a base-2 digital net, stored column-wise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DigitalNetGen {
    columns: Vec<Vec<u64>>,
    t: u32,
}

impl DigitalNetGen {
    pub fn new(columns: Vec<Vec<u64>>, t: u32) -> Result<Self> {
        if !(1..=64).contains(&t) {
            return Err(Error::InvalidParameter(format!(
                "precision t={t} not in 1..=64"
            )));
        }
        let Some(first) = columns.first() else {
            return Err(Error::InvalidParameter("no dimensions".into()));
        };
        let p_max = first.len();
        if p_max == 0 || p_max > 63 {
            return Err(Error::InvalidParameter(format!(
                "p_max={p_max} not in 1..=63"
            )));
        }
        for (j, col) in columns.iter().enumerate() {
            if col.len() != p_max {
                return Err(Error::InvalidParameter(format!(
                    "dimension {j} has {} columns, expected {p_max}",
                    col.len()
                )));
            }
            if t < 64 && col.iter().any(|&c| c >> t != 0) {
                return Err(Error::InvalidParameter(format!(
                    "dimension {j} has a column with more than t={t} bits"
                )));
            }
        }
        Ok(Self { columns, t })
    }

    /// Identity matrices: every dimension reproduces the van der Corput sequence.
    pub fn identity(d: usize, p_max: u32, t: u32) -> Result<Self> {
        if p_max > t {
            return Err(Error::InvalidParameter("p_max exceeds t".into()));
        }
        let col: Vec<u64> = (0..p_max).map(|p| 1u64 << (t - 1 - p)).collect();
        Self::new(vec![col; d], t)
    }

    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn p_max(&self) -> u32 {
        self.columns[0].len() as u32
    }

    pub fn columns(&self) -> &[Vec<u64>] {
        &self.columns
    }

    pub fn max_points(&self) -> u64 {
        1u64 << self.p_max()
    }

    pub fn truncate(&self, d: usize) -> Result<Self> {
        if d > self.d() {
            return Err(Error::TooManyDimensions {
                requested: d,
                available: self.d(),
            });
        }
        Self::new(self.columns[..d].to_vec(), self.t)
    }

    /// Unshifted point `i` as `t`-bit integers, by direct XOR accumulation.
    pub fn point_int(&self, i: u64, out: &mut [u64]) {
        for (o, col) in out.iter_mut().zip(&self.columns) {
            let mut acc = 0u64;
            let mut bits = i;
            while bits != 0 {
                let p = bits.trailing_zeros() as usize;
                acc ^= col[p];
                bits &= bits - 1;
            }
            *o = acc;
        }
    }

    fn check_range(&self, i_start: u64, i_end: u64) -> Result<()> {
        if i_start > i_end {
            return Err(Error::InvalidParameter(format!(
                "i_start {i_start} > i_end {i_end}"
            )));
        }
        if i_end > self.max_points() {
            return Err(Error::TooManyPoints {
                index: i_end - 1,
                max: self.max_points(),
            });
        }
        Ok(())
    }

    /// Unshifted integer points for `i_start..i_end`, row-major. Consecutive
    /// indices are updated incrementally by XOR-ing the columns of the bits
    /// that flip, which gives the same integers as [`Self::point_int`].
    pub fn points_int(&self, i_start: u64, i_end: u64) -> Result<Vec<u64>> {
        self.check_range(i_start, i_end)?;
        let d = self.d();
        let n = (i_end - i_start) as usize;
        let mut out = vec![0u64; n * d];
        if n == 0 {
            return Ok(out);
        }
        let mut cur = vec![0u64; d];
        self.point_int(i_start, &mut cur);
        out[..d].copy_from_slice(&cur);
        for k in 1..n {
            let i = i_start + k as u64;
            let flipped = (i ^ (i - 1)).count_ones() as usize;
            for (c, col) in cur.iter_mut().zip(&self.columns) {
                for &cp in &col[..flipped] {
                    *c ^= cp;
                }
            }
            out[k * d..(k + 1) * d].copy_from_slice(&cur);
        }
        Ok(out)
    }
}

/// Randomization of a point set: a mod-one shift for lattices, a digital
/// (XOR) shift for nets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Shift {
    /// Per-dimension shift as a 64-bit binary fraction.
    Modular(Vec<u64>),
    /// Per-dimension `t`-bit integer XOR-ed into the point digits.
    Digital { bits: Vec<u64>, t: u32 },
}

impl Shift {
    /// Mod-one shift from values in `[0, 1)`.
    pub fn modular(delta: &[f64]) -> Result<Self> {
        if let Some(&bad) = delta.iter().find(|&&x| !(0.0..1.0).contains(&x)) {
            return Err(Error::InvalidParameter(format!("shift {bad} not in [0,1)")));
        }
        Ok(Shift::Modular(
            delta
                .iter()
                .map(|&x| (x * 18446744073709551616.0) as u64)
                .collect(),
        ))
    }

    pub fn digital(bits: Vec<u64>, t: u32) -> Result<Self> {
        if t < 64 && bits.iter().any(|&b| b >> t != 0) {
            return Err(Error::InvalidParameter(format!(
                "digital shift exceeds {t} bits"
            )));
        }
        Ok(Shift::Digital { bits, t })
    }

    pub fn zero_modular(d: usize) -> Self {
        Shift::Modular(vec![0; d])
    }

    pub fn zero_digital(d: usize, t: u32) -> Self {
        Shift::Digital {
            bits: vec![0; d],
            t,
        }
    }

    pub fn random_modular<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        Shift::Modular((0..d).map(|_| rng.gen()).collect())
    }

    pub fn random_digital<R: Rng + ?Sized>(d: usize, t: u32, rng: &mut R) -> Self {
        let mask = if t == 64 { u64::MAX } else { (1u64 << t) - 1 };
        Shift::Digital {
            bits: (0..d).map(|_| rng.gen::<u64>() & mask).collect(),
            t,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Shift::Modular(v) => v.len(),
            Shift::Digital { bits, .. } => bits.len(),
        }
    }

    /// Shift values as reals in `[0, 1)`.
    pub fn delta(&self) -> Vec<f64> {
        match self {
            Shift::Modular(v) => v.iter().map(|&x| fixed_to_f64(x)).collect(),
            Shift::Digital { bits, t } => bits.iter().map(|&x| digital_to_f64(x, *t)).collect(),
        }
    }
}

/// Shifted lattice points `i_start..i_end` in 64-bit fixed point, row-major.
pub fn lattice_points_fixed(
    gen: &LatticeGen,
    shift: &Shift,
    i_start: u64,
    i_end: u64,
) -> Result<Vec<u64>> {
    let Shift::Modular(delta) = shift else {
        return Err(Error::KernelSequenceMismatch(
            "lattice needs a modular shift",
        ));
    };
    if delta.len() != gen.d() {
        return Err(Error::DimensionMismatch {
            expected: gen.d(),
            got: delta.len(),
        });
    }
    gen.check_range(i_start, i_end)?;
    let d = gen.d();
    let n = (i_end - i_start) as usize;
    let mut out = vec![0u64; n * d];
    for (k, row) in out.chunks_exact_mut(d.max(1)).enumerate().take(n) {
        gen.point_fixed(i_start + k as u64, row);
        for (x, &s) in row.iter_mut().zip(delta) {
            *x = x.wrapping_add(s);
        }
    }
    Ok(out)
}

/// Shifted rank-1 lattice points `(v(i) g + delta) mod 1`.
pub fn lattice_points(
    gen: &LatticeGen,
    shift: &Shift,
    i_start: u64,
    i_end: u64,
) -> Result<PointSet> {
    let fixed = lattice_points_fixed(gen, shift, i_start, i_end)?;
    Ok(PointSet {
        n: (i_end - i_start) as usize,
        d: gen.d(),
        data: fixed.into_iter().map(fixed_to_f64).collect(),
    })
}

/// Digitally shifted net points `i_start..i_end` as `t`-bit integers.
pub fn digital_net_points_int(
    gen: &DigitalNetGen,
    shift: &Shift,
    i_start: u64,
    i_end: u64,
) -> Result<Vec<u64>> {
    let Shift::Digital { bits, t } = shift else {
        return Err(Error::KernelSequenceMismatch(
            "digital net needs a digital shift",
        ));
    };
    if bits.len() != gen.d() {
        return Err(Error::DimensionMismatch {
            expected: gen.d(),
            got: bits.len(),
        });
    }
    if *t != gen.t() {
        return Err(Error::InvalidParameter(format!(
            "shift precision {t} differs from net precision {}",
            gen.t()
        )));
    }
    let mut out = gen.points_int(i_start, i_end)?;
    let d = gen.d();
    for row in out.chunks_exact_mut(d) {
        for (x, &s) in row.iter_mut().zip(bits) {
            *x ^= s;
        }
    }
    Ok(out)
}

/// Digitally shifted base-2 digital net points in `[0, 1)`.
pub fn digital_net_points(
    gen: &DigitalNetGen,
    shift: &Shift,
    i_start: u64,
    i_end: u64,
) -> Result<PointSet> {
    let ints = digital_net_points_int(gen, shift, i_start, i_end)?;
    let t = gen.t();
    Ok(PointSet {
        n: (i_end - i_start) as usize,
        d: gen.d(),
        data: ints.into_iter().map(|x| digital_to_f64(x, t)).collect(),
    })
}

/// Default output precision of [`lms_scramble`].
pub const LMS_T_OUT: u32 = 52;

/// Linear matrix scrambling with the default output precision.
pub fn lms_scramble<R: Rng + ?Sized>(gen: &DigitalNetGen, rng: &mut R) -> DigitalNetGen {
    lms_scramble_to(gen, LMS_T_OUT.max(gen.t()), rng).expect("t_out >= t_in")
}

/// Left-multiply every generating matrix by a random `t_out x t_in` lower
/// triangular GF(2) matrix with unit diagonal.
pub fn lms_scramble_to<R: Rng + ?Sized>(
    gen: &DigitalNetGen,
    t_out: u32,
    rng: &mut R,
) -> Result<DigitalNetGen> {
    let t_in = gen.t();
    if t_out < t_in || t_out > 64 {
        return Err(Error::InvalidParameter(format!(
            "t_out={t_out} must lie in {t_in}..=64"
        )));
    }
    let in_mask = if t_in == 64 {
        u64::MAX
    } else {
        (1u64 << t_in) - 1
    };
    let mats: Vec<Vec<u64>> = (0..gen.d())
        .map(|_| {
            (0..t_out)
                .map(|a| {
                    // row a as a t_in-bit mask, column b at bit t_in-1-b
                    if a < t_in {
                        let diag = 1u64 << (t_in - 1 - a);
                        let below = if a == 0 {
                            0
                        } else {
                            rng.gen::<u64>() & (in_mask & !((diag << 1) - 1))
                        };
                        below | diag
                    } else {
                        rng.gen::<u64>() & in_mask
                    }
                })
                .collect()
        })
        .collect();
    apply_lms(gen, &mats, t_out)
}

/// Apply explicit scrambling matrices, one per dimension, each given as
/// `t_out` row masks over the `t_in` input digits.
pub fn apply_lms(gen: &DigitalNetGen, mats: &[Vec<u64>], t_out: u32) -> Result<DigitalNetGen> {
    if mats.len() != gen.d() {
        return Err(Error::DimensionMismatch {
            expected: gen.d(),
            got: mats.len(),
        });
    }
    let columns = gen
        .columns
        .iter()
        .zip(mats)
        .map(|(cols, rows)| {
            cols.iter()
                .map(|&c| {
                    rows.iter().enumerate().fold(0u64, |acc, (a, &m)| {
                        let bit = ((m & c).count_ones() & 1) as u64;
                        acc | bit << (t_out - 1 - a as u32)
                    })
                })
                .collect()
        })
        .collect();
    DigitalNetGen::new(columns, t_out)
}

/// Either generator family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Generator {
    Lattice(LatticeGen),
    Net(DigitalNetGen),
}

impl Generator {
    pub fn kind(&self) -> SeqKind {
        match self {
            Generator::Lattice(_) => SeqKind::Lattice,
            Generator::Net(_) => SeqKind::Net,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Generator::Lattice(g) => g.d(),
            Generator::Net(g) => g.d(),
        }
    }

    pub fn truncate(&self, d: usize) -> Result<Self> {
        Ok(match self {
            Generator::Lattice(g) => Generator::Lattice(g.truncate(d)?),
            Generator::Net(g) => Generator::Net(g.truncate(d)?),
        })
    }

    pub fn max_points(&self) -> u64 {
        match self {
            Generator::Lattice(g) => g.n_max(),
            Generator::Net(g) => g.max_points(),
        }
    }

    /// A zero shift of the matching type.
    pub fn zero_shift(&self) -> Shift {
        match self {
            Generator::Lattice(g) => Shift::zero_modular(g.d()),
            Generator::Net(g) => Shift::zero_digital(g.d(), g.t()),
        }
    }

    /// A uniformly random shift of the matching type.
    pub fn random_shift<R: Rng + ?Sized>(&self, rng: &mut R) -> Shift {
        match self {
            Generator::Lattice(g) => Shift::random_modular(g.d(), rng),
            Generator::Net(g) => Shift::random_digital(g.d(), g.t(), rng),
        }
    }
}

/// A generator together with its randomization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LdConfig {
    pub generator: Generator,
    pub shift: Shift,
}

impl LdConfig {
    pub fn new(generator: Generator, shift: Shift) -> Result<Self> {
        if generator.d() != shift.d() {
            return Err(Error::DimensionMismatch {
                expected: generator.d(),
                got: shift.d(),
            });
        }
        match (&generator, &shift) {
            (Generator::Lattice(_), Shift::Modular(_)) => {}
            (Generator::Net(g), Shift::Digital { t, .. }) if *t == g.t() => {}
            _ => {
                return Err(Error::KernelSequenceMismatch(
                    "shift type does not match generator",
                ))
            }
        }
        Ok(Self { generator, shift })
    }

    pub fn kind(&self) -> SeqKind {
        self.generator.kind()
    }

    pub fn d(&self) -> usize {
        self.generator.d()
    }

    /// Randomized points in `[0, 1)`.
    pub fn points(&self, i_start: u64, i_end: u64) -> Result<PointSet> {
        match &self.generator {
            Generator::Lattice(g) => lattice_points(g, &self.shift, i_start, i_end),
            Generator::Net(g) => digital_net_points(g, &self.shift, i_start, i_end),
        }
    }
}
