//! Discrete Fourier transforms, circular convolution and orthonormal
//! periodic wavelet filter banks.
//!
//! Conventions: the forward DFT is unnormalized, `X_k = Σ x_n e^{-2πi kn/N}`,
//! and the inverse carries the `1/N`. Wavelet transforms use periodic
//! boundaries so that every level is an exact orthogonal change of basis.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Complex samples, e.g. DFT coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVec(pub Vec<Complex64>);

impl ComplexVec {
    pub fn from_real(x: &[f64]) -> Self {
        Self(x.iter().map(|&r| Complex64::new(r, 0.0)).collect())
    }

    pub fn from_parts(re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != im.len() {
            return Err(invalid("real and imaginary parts differ in length"));
        }
        Ok(Self(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn re(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.im).collect()
    }

    pub fn norm2_sqr(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Direct O(N²) evaluation of the DFT sum.
pub fn dft_naive(x: &ComplexVec) -> ComplexVec {
    let n = x.len();
    let out = (0..n)
        .map(|k| {
            x.0.iter()
                .enumerate()
                .map(|(j, xj)| {
                    // Reduce kj mod n before scaling to keep the angle small.
                    let angle = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                    xj * Complex64::from_polar(1.0, angle)
                })
                .sum()
        })
        .collect();
    ComplexVec(out)
}

fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(invalid(format!("length {n} is not a power of two")));
    }
    Ok(())
}

/// Iterative radix-2 decimation-in-time FFT.
///
/// The input is permuted into bit-reversed index order, then combined with
/// butterflies of span 2, 4, ..., N.
pub fn fft(x: &ComplexVec) -> Result<ComplexVec> {
    let mut data = x.0.clone();
    fft_in_place(&mut data, false)?;
    Ok(ComplexVec(data))
}

/// Inverse of [`fft`], including the `1/N` factor.
pub fn ifft(x: &ComplexVec) -> Result<ComplexVec> {
    let mut data = x.0.clone();
    fft_in_place(&mut data, true)?;
    Ok(ComplexVec(data))
}

pub(crate) fn fft_in_place(data: &mut [Complex64], inverse: bool) -> Result<()> {
    let n = data.len();
    check_pow2(n)?;
    if n == 1 {
        return Ok(());
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            data.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let twiddles: Vec<Complex64> = (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64))
        .collect();
    let mut span = 2;
    while span <= n {
        let half = span / 2;
        let stride = n / span;
        for start in (0..n).step_by(span) {
            for k in 0..half {
                let t = twiddles[k * stride] * data[start + k + half];
                let u = data[start + k];
                data[start + k] = u + t;
                data[start + k + half] = u - t;
            }
        }
        span *= 2;
    }
    if inverse {
        let inv = 1.0 / n as f64;
        data.iter_mut().for_each(|c| *c *= inv);
    }
    Ok(())
}

/// `y_n = Σ_m x_m h_{(n-m) mod N}` by direct summation.
pub fn circular_conv_direct(x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if x.len() != h.len() {
        return Err(invalid(format!(
            "convolution length mismatch: {} vs {}",
            x.len(),
            h.len()
        )));
    }
    let n = x.len();
    let mut y = vec![0.0; n];
    for (i, yi) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        // m <= i: h index i - m; m > i: wraps to n + i - m.
        for m in 0..=i {
            acc += x[m] * h[i - m];
        }
        for m in i + 1..n {
            acc += x[m] * h[n + i - m];
        }
        *yi = acc;
    }
    Ok(y)
}

/// Circular convolution via the convolution theorem: `iFFT(FFT(x) · FFT(h))`.
pub fn circular_conv_fft(x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if x.len() != h.len() {
        return Err(invalid(format!(
            "convolution length mismatch: {} vs {}",
            x.len(),
            h.len()
        )));
    }
    let mut xf = ComplexVec::from_real(x).0;
    let mut hf = ComplexVec::from_real(h).0;
    fft_in_place(&mut xf, false)?;
    fft_in_place(&mut hf, false)?;
    xf.iter_mut().zip(&hf).for_each(|(a, b)| *a *= b);
    fft_in_place(&mut xf, true)?;
    Ok(xf.into_iter().map(|c| c.re).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveletFamily {
    Haar,
    /// Four-tap Daubechies filter (two vanishing moments).
    Daubechies4,
}

impl WaveletFamily {
    /// Orthonormal low-pass (scaling) filter.
    pub fn lowpass(self) -> Vec<f64> {
        match self {
            WaveletFamily::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            WaveletFamily::Daubechies4 => {
                let s3 = 3f64.sqrt();
                let d = 4.0 * 2f64.sqrt();
                vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
            }
        }
    }

    /// Quadrature-mirror high-pass filter `g[k] = (-1)^k h[L-1-k]`.
    pub fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let l = h.len();
        (0..l)
            .map(|k| if k % 2 == 0 { h[l - 1 - k] } else { -h[l - 1 - k] })
            .collect()
    }
}

/// Multi-level wavelet coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomp {
    pub family: WaveletFamily,
    pub levels: usize,
    /// Coarsest approximation coefficients `a_J`.
    pub approx: Vec<f64>,
    /// Detail coefficients, finest level first; level `j` has `N / 2^j` entries.
    pub details: Vec<Vec<f64>>,
}

impl WaveletDecomp {
    pub fn signal_len(&self) -> usize {
        self.approx.len() + self.details.iter().map(Vec::len).sum::<usize>()
    }

    /// All coefficients in a flat order: details finest-first, then approx.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.details.concat();
        out.extend_from_slice(&self.approx);
        out
    }

    /// Inverse of [`WaveletDecomp::flatten`] for a signal of length `n`.
    pub fn from_flat(family: WaveletFamily, levels: usize, n: usize, flat: &[f64]) -> Result<Self> {
        check_levels(n, levels)?;
        if flat.len() != n {
            return Err(invalid("flat coefficient count differs from signal length"));
        }
        let mut details = Vec::with_capacity(levels);
        let mut offset = 0;
        for j in 1..=levels {
            let len = n >> j;
            details.push(flat[offset..offset + len].to_vec());
            offset += len;
        }
        Ok(Self {
            family,
            levels,
            approx: flat[offset..].to_vec(),
            details,
        })
    }
}

/// Largest usable decomposition depth for a signal of length `n`.
pub fn max_levels(n: usize) -> usize {
    n.trailing_zeros() as usize
}

fn check_levels(n: usize, levels: usize) -> Result<()> {
    check_pow2(n)?;
    if levels == 0 || levels > max_levels(n) {
        return Err(invalid(format!(
            "cannot take {levels} wavelet levels of a length-{n} signal"
        )));
    }
    Ok(())
}

fn analysis_step(x: &[f64], h: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for i in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        for k in 0..h.len() {
            let xv = x[(2 * i + k) % n];
            sa += h[k] * xv;
            sd += g[k] * xv;
        }
        a[i] = sa;
        d[i] = sd;
    }
    (a, d)
}

fn synthesis_step(a: &[f64], d: &[f64], h: &[f64], g: &[f64]) -> Vec<f64> {
    let n = 2 * a.len();
    let mut x = vec![0.0; n];
    for i in 0..a.len() {
        for k in 0..h.len() {
            x[(2 * i + k) % n] += h[k] * a[i] + g[k] * d[i];
        }
    }
    x
}

/// Periodic orthonormal analysis filter bank, `levels` deep.
pub fn dwt(x: &[f64], family: WaveletFamily, levels: usize) -> Result<WaveletDecomp> {
    check_levels(x.len(), levels)?;
    let h = family.lowpass();
    let g = family.highpass();
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = analysis_step(&approx, &h, &g);
        details.push(d);
        approx = a;
    }
    Ok(WaveletDecomp {
        family,
        levels,
        approx,
        details,
    })
}

/// Synthesis side of [`dwt`]; exact inverse up to rounding.
pub fn idwt(decomp: &WaveletDecomp) -> Result<Vec<f64>> {
    if decomp.details.len() != decomp.levels || decomp.levels == 0 {
        return Err(invalid("detail level count does not match `levels`"));
    }
    let n = decomp.signal_len();
    check_levels(n, decomp.levels)?;
    for (j, d) in decomp.details.iter().enumerate() {
        if d.len() != n >> (j + 1) {
            return Err(invalid(format!(
                "detail level {} has {} coefficients, expected {}",
                j + 1,
                d.len(),
                n >> (j + 1)
            )));
        }
    }
    if decomp.approx.len() != n >> decomp.levels {
        return Err(invalid("approximation length inconsistent with levels"));
    }
    let h = decomp.family.lowpass();
    let g = decomp.family.highpass();
    let mut approx = decomp.approx.clone();
    for d in decomp.details.iter().rev() {
        approx = synthesis_step(&approx, d, &h, &g);
    }
    Ok(approx)
}
