//! Orthonormal fast transforms that diagonalize Gram matrices of matched
//! kernel / low-discrepancy pairs.
//!
//! * [`fwht`]: Walsh–Hadamard transform, real, its own inverse.
//! * [`fftbr`] / [`ifftbr`]: discrete Fourier transform whose input is in
//!   bit-reversed (radical inverse) order. The forward map is a decimation in
//!   time FFT that skips the usual permutation pass; its inverse is a decimation
//!   in frequency FFT that produces bit-reversed output.
//!
//! Both are scaled by `1/sqrt(n)` so the matrices are unitary.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Which transform diagonalizes a given Gram structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformKind {
    Fwht,
    Fftbr,
}

fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(())
}

/// In-place orthonormal fast Walsh–Hadamard transform.
pub fn fwht(a: &mut [f64]) -> Result<()> {
    let n = a.len();
    check_pow2(n)?;
    let mut h = 1;
    while h < n {
        for block in a.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (u, v) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*u, *v);
                *u = x + y;
                *v = x - y;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / (n as f64).sqrt();
    a.iter_mut().for_each(|x| *x *= scale);
    Ok(())
}

/// Twiddle table for bit-reversed FFTs of one size, reusable across calls.
#[derive(Clone, Debug)]
pub struct FftbrPlan {
    n: usize,
    // e^{-2 pi i k / n}, k < n/2
    twiddles: Vec<Complex64>,
}

impl FftbrPlan {
    pub fn new(n: usize) -> Result<Self> {
        check_pow2(n)?;
        let twiddles = (0..n / 2)
            .map(|k| {
                let theta = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Complex64::new(theta.cos(), theta.sin())
            })
            .collect();
        Ok(Self { n, twiddles })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn check(&self, a: &[Complex64]) -> Result<()> {
        if a.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: a.len(),
            });
        }
        Ok(())
    }

    /// Forward transform: bit-reversed input, natural-order output.
    pub fn forward(&self, a: &mut [Complex64]) -> Result<()> {
        self.check(a)?;
        let n = self.n;
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for block in a.chunks_exact_mut(len) {
                let (lo, hi) = block.split_at_mut(half);
                for k in 0..half {
                    let t = hi[k] * self.twiddles[k * stride];
                    let u = lo[k];
                    lo[k] = u + t;
                    hi[k] = u - t;
                }
            }
            len *= 2;
        }
        let scale = 1.0 / (n as f64).sqrt();
        a.iter_mut().for_each(|x| *x *= scale);
        Ok(())
    }

    /// Inverse transform: natural-order input, bit-reversed output.
    pub fn inverse(&self, a: &mut [Complex64]) -> Result<()> {
        self.check(a)?;
        let n = self.n;
        let mut len = n;
        while len >= 2 {
            let half = len / 2;
            let stride = n / len;
            for block in a.chunks_exact_mut(len) {
                let (lo, hi) = block.split_at_mut(half);
                for k in 0..half {
                    let u = lo[k];
                    let v = hi[k];
                    lo[k] = u + v;
                    hi[k] = (u - v) * self.twiddles[k * stride].conj();
                }
            }
            len /= 2;
        }
        let scale = 1.0 / (n as f64).sqrt();
        a.iter_mut().for_each(|x| *x *= scale);
        Ok(())
    }
}

/// In-place orthonormal FFT of a bit-reversed-order vector.
pub fn fftbr(a: &mut [Complex64]) -> Result<()> {
    FftbrPlan::new(a.len())?.forward(a)
}

/// Inverse of [`fftbr`].
pub fn ifftbr(a: &mut [Complex64]) -> Result<()> {
    FftbrPlan::new(a.len())?.inverse(a)
}

/// Reverse the lowest `bits` bits of `i`.
pub fn bit_reverse(i: usize, bits: u32) -> usize {
    if bits == 0 {
        return 0;
    }
    i.reverse_bits() >> (usize::BITS - bits)
}
