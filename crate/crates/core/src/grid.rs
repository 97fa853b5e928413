//! Uniform periodic grid on the unit torus and the sampled fields living on it.
//!
//! Finite differences are written in flux form: a face array `F` of length
//! `n` stores `F_{i+1/2}` at index `i`, and [`flux_divergence`] telescopes
//! exactly under [`Field::integrate`].

use crate::error::{Error, Result};
use crate::fft;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TorusGrid {
    n: usize,
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n must be even and >= 8, got {n}"
            )));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Spacing, always derived as `1/n`.
    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }
}

/// Point samples `u(x_i)` of a periodic function.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::GridMismatch {
                expected: grid.n(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().map(f).collect())
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self {
            grid,
            values: alloc::vec![c; grid.n()],
        }
    }

    /// Crate-internal constructor for values already known to be finite.
    pub(crate) fn from_parts(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                expected: self.grid.n(),
                got: other.grid.n(),
            });
        }
        Ok(())
    }

    /// Discrete inner product `h Σ f_i g_i`.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Ok(s * self.grid.h())
    }

    /// Periodic trapezoid rule `h Σ f_i`.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.h()
    }

    /// Centered periodic differences of order 1, 2 or 4.
    pub fn fd_diff(&self, order: u32) -> Result<Field> {
        let v = match order {
            1 => centered_first(&self.values, self.grid.h()),
            2 => second_difference(&self.values, self.grid.h()),
            4 => {
                let d2 = second_difference(&self.values, self.grid.h());
                second_difference(&d2, self.grid.h())
            }
            other => return Err(Error::UnsupportedOrder(other)),
        };
        Ok(Field::from_parts(self.grid, v))
    }

    /// Fourier differentiation: mode `k` is multiplied by `(2πik)^order`.
    /// For odd orders the Nyquist mode is dropped.
    pub fn spectral_diff(&self, order: u32) -> Result<Field> {
        if !self.is_finite() {
            let index = self.values.iter().position(|v| !v.is_finite()).unwrap_or(0);
            return Err(Error::NonFinite { index });
        }
        let n = self.grid.n();
        let mut coeffs = fft::forward_real(&self.values);
        for (j, c) in coeffs.iter_mut().enumerate() {
            let k = fft::wavenumber(j, n);
            if order % 2 == 1 && k == -(n as i64) / 2 {
                *c = Complex64::new(0.0, 0.0);
                continue;
            }
            let ik = Complex64::new(0.0, 2.0 * PI * k as f64);
            *c *= ik.powu(order);
        }
        Ok(Field::from_parts(self.grid, fft::inverse_real(&coeffs)))
    }

    /// `( Σ_k (1+(2πk)²)^s |f̂_k|² )^{1/2}` with unitary-mean coefficients.
    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        self.sobolev_norm_with(&fft::Plan::new(self.grid.n()), s)
    }

    /// [`Field::sobolev_norm`] with a precomputed transform plan.
    pub fn sobolev_norm_with(&self, plan: &fft::Plan, s: f64) -> Result<f64> {
        if !(-4.0..=4.0).contains(&s) {
            return Err(Error::OutOfRange(format!(
                "Sobolev index s = {s} outside [-4, 4]"
            )));
        }
        let n = self.grid.n();
        let coeffs = plan.forward_real(&self.values);
        let integer = s.fract() == 0.0;
        let sum: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let w = 2.0 * PI * fft::wavenumber(j, n) as f64;
                let weight = if integer {
                    (1.0 + w * w).powi(s as i32)
                } else {
                    (1.0 + w * w).powf(s)
                };
                weight * c.norm_sqr()
            })
            .sum();
        Ok(sum.sqrt())
    }

    /// Grid `L^q` norm; pass `f64::INFINITY` for the max norm.
    pub fn lq_norm(&self, q: f64) -> Result<f64> {
        lq_norm(&self.values, q)
    }

    /// Trigonometric interpolation onto a grid with `new_n` points.
    pub fn resample_spectral(&self, new_n: usize) -> Result<Field> {
        let grid = TorusGrid::new(new_n)?;
        let coeffs = fft::forward_real(&self.values);
        let resized = fft::resize_spectrum(&coeffs, new_n);
        Field::new(grid, fft::inverse_real(&resized))
    }

    pub fn add_scaled(&self, other: &Field, scale: f64) -> Result<Field> {
        self.check_same_grid(other)?;
        let v = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Field::new(self.grid, v)
    }
}

/// Grid `L^q` norm of raw samples with unit-length quadrature weight `1/n`.
pub fn lq_norm(values: &[f64], q: f64) -> Result<f64> {
    if q.is_infinite() && q > 0.0 {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    if !(q >= 1.0) {
        return Err(Error::OutOfRange(format!(
            "L^q exponent q = {q} must be >= 1"
        )));
    }
    let h = 1.0 / values.len() as f64;
    let s: f64 = values.iter().map(|v| v.abs().powf(q)).sum();
    Ok((h * s).powf(1.0 / q))
}

fn centered_first(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| (v[next(i, n)] - v[prev(i, n)]) / (2.0 * h))
        .collect()
}

fn second_difference(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let h2 = h * h;
    (0..n)
        .map(|i| (v[next(i, n)] - 2.0 * v[i] + v[prev(i, n)]) / h2)
        .collect()
}

/// Periodic successor index.
#[inline]
pub(crate) fn next(i: usize, n: usize) -> usize {
    if i + 1 == n {
        0
    } else {
        i + 1
    }
}

/// Periodic predecessor index.
#[inline]
pub(crate) fn prev(i: usize, n: usize) -> usize {
    if i == 0 {
        n - 1
    } else {
        i - 1
    }
}

/// Forward difference onto faces: `(v_{i+1} - v_i)/h` stored at index `i`.
pub fn face_gradient(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| (v[next(i, n)] - v[i]) / h).collect()
}

/// Arithmetic face average `(v_i + v_{i+1})/2` stored at index `i`.
pub fn face_average(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| 0.5 * (v[i] + v[next(i, n)])).collect()
}

/// Flux divergence `(F_{i+1/2} - F_{i-1/2})/h`.
pub fn flux_divergence(faces: &[f64], h: f64) -> Vec<f64> {
    let n = faces.len();
    (0..n).map(|i| (faces[i] - faces[prev(i, n)]) / h).collect()
}
