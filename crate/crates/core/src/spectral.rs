//! Real FFT and level-1 Haar wavelet transforms, their inverses, and the
//! backward (adjoint) maps the tape uses to differentiate through them.
//!
//! Conventions:
//! * the forward DFT is unnormalized, the inverse carries the `1/n`;
//! * a one-sided spectrum of a length-`n` signal has `n/2 + 1` bins
//!   (integer division), for odd `n` as well;
//! * the Haar filters are orthonormal, `L = [1/√2, 1/√2]` and
//!   `H = [1/√2, -1/√2]`, so `detail[m] = (x[2m] - x[2m+1]) / √2`.
//!
//! All blocks are column-oriented: rows are time steps (or bins, or
//! wavelet coefficients) and every column is transformed independently.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Matrix;

/// Number of non-redundant bins of the DFT of a real length-`n` signal.
#[inline]
pub fn bin_count(n: usize) -> usize {
    n / 2 + 1
}

/// One-sided spectrum, `bins x channels` real and imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum<T: Real> {
    pub re: Matrix<T>,
    pub im: Matrix<T>,
    pub n_origin: usize,
}

impl<T: Real> ComplexSpectrum<T> {
    pub fn zeros(n_origin: usize, channels: usize) -> Self {
        let bins = bin_count(n_origin);
        ComplexSpectrum {
            re: Matrix::zeros(bins, channels),
            im: Matrix::zeros(bins, channels),
            n_origin,
        }
    }

    pub fn bins(&self) -> usize {
        self.re.rows()
    }

    pub fn channels(&self) -> usize {
        self.re.cols()
    }

    /// Multiplicity of bin `m` in the two-sided spectrum.
    #[inline]
    pub fn multiplicity(&self, m: usize) -> usize {
        bin_multiplicity(self.n_origin, m)
    }
}

#[inline]
fn bin_multiplicity(n: usize, m: usize) -> usize {
    if m == 0 || (n % 2 == 0 && m == n / 2) {
        1
    } else {
        2
    }
}

/// Level-1 Haar coefficients, each `n_origin/2 x channels`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletPair<T: Real> {
    pub approx: Matrix<T>,
    pub detail: Matrix<T>,
    pub n_origin: usize,
}

/// Orthonormal Haar analysis filters.
pub fn haar_filters<T: Real>() -> ([T; 2], [T; 2]) {
    let s = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    ([s, s], [s, -s])
}

/// Forward/inverse complex FFT kernels for one signal length.
#[derive(Clone)]
pub struct FftPlan<T: Real> {
    n: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for FftPlan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan").field("n", &self.n).finish()
    }
}

impl<T: Real> FftPlan<T> {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "transform length must be at least 2, got {n}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(FftPlan {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bins(&self) -> usize {
        bin_count(self.n)
    }

    pub fn rfft(&self, x: &Matrix<T>) -> Result<ComplexSpectrum<T>> {
        if x.rows() != self.n {
            return Err(Error::shape("rfft", format!("{} rows", self.n), x.rows()));
        }
        let (n, c) = x.shape();
        let bins = self.bins();
        let mut buf: Vec<Complex<T>> = Vec::with_capacity(n * c);
        for ch in 0..c {
            buf.extend((0..n).map(|t| Complex::new(x.get(t, ch), T::zero())));
        }
        self.forward.process(&mut buf);

        let mut out = ComplexSpectrum::zeros(n, c);
        for ch in 0..c {
            let col = &buf[ch * n..(ch + 1) * n];
            for m in 0..bins {
                out.re.set(m, ch, col[m].re);
                out.im.set(m, ch, col[m].im);
            }
            // Exact zeros where real input forces them.
            out.im.set(0, ch, T::zero());
            if n % 2 == 0 {
                out.im.set(n / 2, ch, T::zero());
            }
        }
        Ok(out)
    }

    pub fn irfft(&self, spec: &ComplexSpectrum<T>) -> Result<Matrix<T>> {
        let n = self.n;
        let bins = self.bins();
        if spec.n_origin != n || spec.bins() != bins || spec.im.shape() != spec.re.shape() {
            return Err(Error::shape(
                "irfft",
                format!("{bins} bins for length {n}"),
                format!("{} bins for length {}", spec.bins(), spec.n_origin),
            ));
        }
        let c = spec.channels();
        let mut buf: Vec<Complex<T>> = vec![Complex::new(T::zero(), T::zero()); n * c];
        for ch in 0..c {
            let col = &mut buf[ch * n..(ch + 1) * n];
            for m in 0..bins {
                col[m] = Complex::new(spec.re.get(m, ch), spec.im.get(m, ch));
            }
            col[0].im = T::zero();
            if n % 2 == 0 {
                col[n / 2].im = T::zero();
            }
            for m in bins..n {
                col[m] = col[n - m].conj();
            }
        }
        self.inverse.process(&mut buf);

        let scale = T::one() / T::lit(n as f64);
        let mut out = Matrix::zeros(n, c);
        for ch in 0..c {
            for t in 0..n {
                out.set(t, ch, buf[ch * n + t].re * scale);
            }
        }
        Ok(out)
    }

    /// Transpose of `rfft` viewed as a real-linear map `R^n -> R^(2·bins)`.
    pub fn rfft_adjoint(&self, grad: &ComplexSpectrum<T>) -> Result<Matrix<T>> {
        // rfftᵀ(G) = n · irfft(G / multiplicity)
        let mut g = grad.clone();
        for m in 0..g.bins() {
            if g.multiplicity(m) == 2 {
                let half = T::lit(0.5);
                for ch in 0..g.channels() {
                    g.re.set(m, ch, g.re.get(m, ch) * half);
                    g.im.set(m, ch, g.im.get(m, ch) * half);
                }
            }
        }
        let mut out = self.irfft(&g)?;
        out.scale(T::lit(self.n as f64));
        Ok(out)
    }

    /// Transpose of `irfft` viewed as a real-linear map `R^(2·bins) -> R^n`.
    pub fn irfft_adjoint(&self, grad: &Matrix<T>) -> Result<ComplexSpectrum<T>> {
        // irfftᵀ(g) = multiplicity / n · rfft(g)
        let mut spec = self.rfft(grad)?;
        let inv_n = T::one() / T::lit(self.n as f64);
        for m in 0..spec.bins() {
            let w = T::lit(spec.multiplicity(m) as f64) * inv_n;
            for ch in 0..spec.channels() {
                spec.re.set(m, ch, spec.re.get(m, ch) * w);
                spec.im.set(m, ch, spec.im.get(m, ch) * w);
            }
        }
        Ok(spec)
    }
}

fn check_block<T: Real>(x: &Matrix<T>, op: &str) -> Result<()> {
    if x.rows() < 2 {
        return Err(Error::InvalidInput(format!(
            "{op}: sequence length must be at least 2, got {}",
            x.rows()
        )));
    }
    if !x.is_finite() {
        return Err(Error::InvalidInput(format!("{op}: non-finite input")));
    }
    Ok(())
}

/// Column-wise one-sided DFT.
pub fn rfft<T: Real>(x: &Matrix<T>) -> Result<ComplexSpectrum<T>> {
    check_block(x, "rfft")?;
    FftPlan::new(x.rows())?.rfft(x)
}

/// Inverse of [`rfft`] for a signal of length `n`.
pub fn irfft<T: Real>(spec: &ComplexSpectrum<T>, n: usize) -> Result<Matrix<T>> {
    if spec.n_origin != n {
        return Err(Error::shape("irfft", format!("length {}", spec.n_origin), n));
    }
    FftPlan::new(n)?.irfft(spec)
}

pub fn haar_dwt<T: Real>(x: &Matrix<T>) -> Result<WaveletPair<T>> {
    let (n, c) = x.shape();
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "haar_dwt needs an even length of at least 2, got {n}"
        )));
    }
    let (lo, hi) = haar_filters::<T>();
    let half = n / 2;
    let mut approx = Matrix::zeros(half, c);
    let mut detail = Matrix::zeros(half, c);
    for m in 0..half {
        let (even, odd) = (x.row(2 * m), x.row(2 * m + 1));
        for ch in 0..c {
            approx.set(m, ch, lo[0] * even[ch] + lo[1] * odd[ch]);
            detail.set(m, ch, hi[0] * even[ch] + hi[1] * odd[ch]);
        }
    }
    Ok(WaveletPair {
        approx,
        detail,
        n_origin: n,
    })
}

pub fn haar_idwt<T: Real>(w: &WaveletPair<T>) -> Result<Matrix<T>> {
    let half = w.approx.rows();
    if w.approx.shape() != w.detail.shape() || w.n_origin != 2 * half || half == 0 {
        return Err(Error::shape(
            "haar_idwt",
            format!("approx {:?} = detail, n = {}", w.approx.shape(), 2 * half),
            format!("detail {:?}, n = {}", w.detail.shape(), w.n_origin),
        ));
    }
    let (lo, hi) = haar_filters::<T>();
    let c = w.approx.cols();
    let mut x = Matrix::zeros(w.n_origin, c);
    for m in 0..half {
        for ch in 0..c {
            let (a, d) = (w.approx.get(m, ch), w.detail.get(m, ch));
            x.set(2 * m, ch, lo[0] * a + hi[0] * d);
            x.set(2 * m + 1, ch, lo[1] * a + hi[1] * d);
        }
    }
    Ok(x)
}

/// Backward map of [`haar_dwt`]; the orthonormal analysis operator's
/// transpose is its inverse.
pub fn haar_dwt_adjoint<T: Real>(grad: &WaveletPair<T>) -> Result<Matrix<T>> {
    haar_idwt(grad)
}

/// Backward map of [`haar_idwt`].
pub fn haar_idwt_adjoint<T: Real>(grad: &Matrix<T>) -> Result<WaveletPair<T>> {
    haar_dwt(grad)
}

/// `|Σ|x|² − (1/n) Σ_k |X_k|²|` over every channel, with the two-sided
/// energy rebuilt from the one-sided spectrum by conjugate symmetry.
pub fn parseval_residual<T: Real>(x: &Matrix<T>) -> Result<T> {
    let spec = rfft(x)?;
    let n = x.rows();
    let time_energy: T = x.as_slice().iter().map(|&v| v * v).sum();
    let mut freq_energy = T::zero();
    for m in 0..spec.bins() {
        let mult = T::lit(spec.multiplicity(m) as f64);
        for ch in 0..spec.channels() {
            let (re, im) = (spec.re.get(m, ch), spec.im.get(m, ch));
            freq_energy = freq_energy + mult * (re * re + im * im);
        }
    }
    Ok((time_energy - freq_energy / T::lit(n as f64)).abs())
}

/// Circular convolution by the direct `O(n²)` sum over the periodic
/// extension of `x`.
pub fn circular_convolution<T: Real>(h: &[T], x: &[T]) -> Vec<T> {
    let n = x.len();
    (0..n)
        .map(|m| {
            (0..n)
                .map(|j| h[j] * x[(m + n - j) % n])
                .fold(T::zero(), |a, b| a + b)
        })
        .collect()
}

/// Max abs difference between the direct circular convolution of two
/// single-channel signals and the inverse transform of their spectral
/// product.
pub fn convolution_theorem_residual<T: Real>(h: &Matrix<T>, x: &Matrix<T>) -> Result<T> {
    if h.shape() != x.shape() || h.cols() != 1 {
        return Err(Error::InvalidInput(format!(
            "convolution needs two single-channel signals of equal length, got {:?} and {:?}",
            h.shape(),
            x.shape()
        )));
    }
    check_block(h, "convolution")?;
    check_block(x, "convolution")?;
    let plan = FftPlan::new(x.rows())?;
    let (hs, xs) = (plan.rfft(h)?, plan.rfft(x)?);
    let mut prod = ComplexSpectrum::zeros(x.rows(), 1);
    for m in 0..prod.bins() {
        let (a, b) = (hs.re.get(m, 0), hs.im.get(m, 0));
        let (c, d) = (xs.re.get(m, 0), xs.im.get(m, 0));
        prod.re.set(m, 0, a * c - b * d);
        prod.im.set(m, 0, a * d + b * c);
    }
    let spectral = plan.irfft(&prod)?;
    let direct = circular_convolution(h.as_slice(), x.as_slice());
    Ok(direct
        .iter()
        .zip(spectral.as_slice())
        .map(|(&a, &b)| (a - b).abs())
        .fold(T::zero(), T::max))
}
