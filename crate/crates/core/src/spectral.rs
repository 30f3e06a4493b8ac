//! Real-input FFT and the frequency features built from it.
//!
//! Forward transforms are unnormalized, `X[k] = Σ_j x[j]·e^{-2πi jk/n}`, and
//! the inverse carries the `1/n` factor. A length-`n` real transform is
//! computed with one length-`n/2` complex radix-2 transform of the even/odd
//! interleaved input, followed by a split step.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Non-redundant half of the spectrum of a real signal of length `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    n: usize,
    bins: Vec<Complex64>,
}

impl ComplexSpectrum {
    /// Builds a spectrum, checking the layout and the real-input symmetry of
    /// the DC and Nyquist bins.
    pub fn new(n: usize, bins: Vec<Complex64>) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidFftLength(n));
        }
        if bins.len() != n / 2 + 1 {
            return Err(Error::InvalidSpectrum(format!(
                "{} bins for n = {n}, expected {}",
                bins.len(),
                n / 2 + 1
            )));
        }
        if bins.iter().any(|b| !(b.re.is_finite() && b.im.is_finite())) {
            return Err(Error::InvalidSpectrum("non-finite bin".into()));
        }
        let scale = 1.0 + bins.iter().map(|b| b.norm()).fold(0.0, f64::max);
        for k in [0, n / 2] {
            if bins[k].im.abs() > 1e-9 * scale {
                return Err(Error::InvalidSpectrum(format!(
                    "bin {k} must be real, has imaginary part {}",
                    bins[k].im
                )));
            }
        }
        Ok(Self { n, bins })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }
}

/// Precomputed tables for real transforms of one length.
#[derive(Clone, Debug)]
pub struct FftPlan {
    n: usize,
    bitrev: Vec<usize>,
    // e^{-2πik/(n/2)}, k < n/4, for the complex butterflies
    twiddles: Vec<Complex64>,
    // e^{-2πik/n}, k <= n/2, for the real split step
    split: Vec<Complex64>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidFftLength(n));
        }
        let half = n / 2;
        let bits = half.trailing_zeros();
        let bitrev = (0..half)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        let twiddles = (0..half / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / half as f64))
            .collect();
        let split = (0..=half)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Ok(Self {
            n,
            bitrev,
            twiddles,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn complex_in_place(&self, a: &mut [Complex64], inverse: bool) {
        let half = a.len();
        for i in 0..half {
            let j = self.bitrev[i];
            if i < j {
                a.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= half {
            let step = half / len;
            for start in (0..half).step_by(len) {
                for j in 0..len / 2 {
                    let mut w = self.twiddles[j * step];
                    if inverse {
                        w = w.conj();
                    }
                    let u = a[start + j];
                    let v = a[start + j + len / 2] * w;
                    a[start + j] = u + v;
                    a[start + j + len / 2] = u - v;
                }
            }
            len <<= 1;
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<ComplexSpectrum> {
        if x.len() != self.n {
            return Err(Error::InvalidFftLength(x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("rfft"));
        }
        let half = self.n / 2;
        let mut z: Vec<Complex64> = x
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        self.complex_in_place(&mut z, false);

        let minus_i_half = Complex64::new(0.0, -0.5);
        let mut bins = Vec::with_capacity(half + 1);
        for k in 0..=half {
            let zk = z[k % half];
            let zc = z[(half - k) % half].conj();
            let even = (zk + zc) * 0.5;
            let odd = (zk - zc) * minus_i_half;
            bins.push(even + self.split[k] * odd);
        }
        bins[0].im = 0.0;
        bins[half].im = 0.0;
        Ok(ComplexSpectrum { n: self.n, bins })
    }

    pub fn inverse(&self, s: &ComplexSpectrum) -> Result<Vec<f64>> {
        if s.n != self.n {
            return Err(Error::InvalidFftLength(s.n));
        }
        let half = self.n / 2;
        let i = Complex64::new(0.0, 1.0);
        let mut z: Vec<Complex64> = (0..half)
            .map(|k| {
                let xk = s.bins[k];
                let xc = s.bins[half - k].conj();
                let even = (xk + xc) * 0.5;
                let odd = (xk - xc) * 0.5 * self.split[k].conj();
                even + i * odd
            })
            .collect();
        self.complex_in_place(&mut z, true);
        let scale = 1.0 / half as f64;
        Ok(z.iter()
            .flat_map(|c| [c.re * scale, c.im * scale])
            .collect())
    }
}

/// Forward real FFT. The length must be a power of two, at least 2.
pub fn rfft(x: &[f64]) -> Result<ComplexSpectrum> {
    FftPlan::new(x.len())?.forward(x)
}

/// Inverse of [`rfft`], including the `1/n` scaling.
pub fn irfft(s: &ComplexSpectrum) -> Result<Vec<f64>> {
    FftPlan::new(s.n)?.inverse(s)
}

pub fn power_spectrum(s: &ComplexSpectrum) -> Vec<f64> {
    s.bins.iter().map(|b| b.norm_sqr()).collect()
}

/// Transform length used for an embedding of dimension `d`.
pub fn padded_len(d: usize) -> usize {
    d.next_power_of_two().max(2)
}

/// Length of [`to_freq_feature`] output for an embedding of dimension `d`.
pub fn freq_feature_len(d: usize) -> usize {
    2 * (padded_len(d) / 2 + 1)
}

/// Zero-padded spectrum of an embedding.
pub fn embedding_spectrum(x: &[f64]) -> Result<ComplexSpectrum> {
    if x.is_empty() {
        return Err(Error::Empty("embedding"));
    }
    let mut padded = x.to_vec();
    padded.resize(padded_len(x.len()), 0.0);
    rfft(&padded)
}

/// Real-valued frequency feature: real parts of the half spectrum followed by
/// the imaginary parts.
pub fn to_freq_feature(x: &[f64]) -> Result<Vec<f64>> {
    let s = embedding_spectrum(x)?;
    let mut out = Vec::with_capacity(2 * s.bins.len());
    out.extend(s.bins.iter().map(|b| b.re));
    out.extend(s.bins.iter().map(|b| b.im));
    Ok(out)
}
