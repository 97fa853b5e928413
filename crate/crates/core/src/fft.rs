//! Discrete Fourier transform on the periodic grid.
//!
//! Coefficients follow the unitary-mean convention: the forward transform
//! divides by `n`, so `f_i = Σ_k f̂_k e^{2πi k x_i}` and Parseval reads
//! `h Σ |f_i|² = Σ |f̂_k|²`. Power-of-two lengths use an iterative radix-2
//! Cooley–Tukey pass; any other length falls back to the direct sum.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;
use num_complex::Complex64;

/// Signed wavenumber stored at index `j` of a length-`n` spectrum.
///
/// The Nyquist slot `j = n/2` maps to `-n/2`.
pub fn wavenumber(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// `exp(sign · 2πi j/n)`, evaluated from an angle reduced to the first
/// octant so that quarter-turn values are exact and the rest are within an
/// ulp or so.
fn root_of_unity(j: usize, n: usize, sign: f64) -> Complex64 {
    let j = (j % n) as u128;
    let n = n as u128;
    let quadrant = (4 * j) / n;
    let rem = 4 * j - quadrant * n;
    // angle within the quadrant is (π/2)·rem/n
    let (c, s) = if 2 * rem <= n {
        let a = FRAC_PI_2 * rem as f64 / n as f64;
        (a.cos(), a.sin())
    } else {
        let a = FRAC_PI_2 * (n - rem) as f64 / n as f64;
        (a.sin(), a.cos())
    };
    let (c, s) = match quadrant {
        0 => (c, s),
        1 => (-s, c),
        2 => (-c, -s),
        _ => (s, -c),
    };
    Complex64::new(c, sign * s)
}

/// Reusable twiddle table for one transform length.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    n: usize,
    // e^{-2πij/n} for j < n/2 (power-of-two lengths only)
    twiddles: Vec<Complex64>,
}

impl Plan {
    pub fn new(n: usize) -> Self {
        let twiddles = if n.is_power_of_two() {
            (0..n / 2).map(|j| root_of_unity(j, n, -1.0)).collect()
        } else {
            Vec::new()
        };
        Self { n, twiddles }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn transform(&self, data: &mut [Complex64], sign: f64) {
        let n = data.len();
        assert_eq!(n, self.n, "plan length mismatch");
        if n <= 1 {
            return;
        }
        if !n.is_power_of_two() {
            let src = data.to_vec();
            for (k, out) in data.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, v) in src.iter().enumerate() {
                    // reduce the phase index first to keep the angle small
                    acc += v * root_of_unity(j * k, n, sign);
                }
                *out = acc;
            }
            return;
        }
        let bits = n.trailing_zeros();
        for i in 0..n {
            let r = i.reverse_bits() >> (usize::BITS - bits);
            if r > i {
                data.swap(i, r);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for chunk in data.chunks_exact_mut(len) {
                let (lo, hi) = chunk.split_at_mut(half);
                for (j, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let w = self.twiddles[j * stride];
                    let w = if sign > 0.0 { w.conj() } else { w };
                    let t = *b * w;
                    *b = *a - t;
                    *a += t;
                }
            }
            len <<= 1;
        }
    }

    /// Forward transform of a real signal, normalized by `1/n`.
    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, -1.0);
        let scale = 1.0 / self.n as f64;
        for c in &mut data {
            *c *= scale;
        }
        data
    }

    /// Inverse transform (no normalization).
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut data = coeffs.to_vec();
        self.transform(&mut data, 1.0);
        data
    }

    pub fn inverse_real(&self, coeffs: &[Complex64]) -> Vec<f64> {
        self.inverse(coeffs).into_iter().map(|c| c.re).collect()
    }
}

/// Forward transform of a real signal, normalized by `1/n`.
pub fn forward_real(values: &[f64]) -> Vec<Complex64> {
    Plan::new(values.len()).forward_real(values)
}

/// Inverse transform (no normalization).
pub fn inverse(coeffs: &[Complex64]) -> Vec<Complex64> {
    Plan::new(coeffs.len()).inverse(coeffs)
}

/// Inverse transform keeping only the real part.
pub fn inverse_real(coeffs: &[Complex64]) -> Vec<f64> {
    Plan::new(coeffs.len()).inverse_real(coeffs)
}

/// Zero-padded (or truncated) copy of a spectrum for resampling on another
/// grid. The Nyquist coefficient is split evenly between `±n/2` when
/// refining and folded back when coarsening so real signals stay real.
pub fn resize_spectrum(coeffs: &[Complex64], new_n: usize) -> Vec<Complex64> {
    let n = coeffs.len();
    let mut out = vec![Complex64::new(0.0, 0.0); new_n];
    for (j, c) in coeffs.iter().enumerate() {
        let k = wavenumber(j, n);
        let is_nyq = n.is_multiple_of(2) && k == -(n as i64) / 2;
        if is_nyq && new_n > n {
            let half = *c * 0.5;
            let kp = (n / 2) as i64;
            out[kp as usize] += half;
            out[new_n - kp as usize] += half;
            continue;
        }
        let lim = (new_n / 2) as i64;
        if k > -lim && k < lim {
            let idx = if k >= 0 {
                k as usize
            } else {
                (new_n as i64 + k) as usize
            };
            out[idx] += *c;
        } else if k.abs() == lim {
            // lands on the new Nyquist slot
            out[new_n / 2] += *c;
        }
    }
    out
}
