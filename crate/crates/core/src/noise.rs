//! Truncated trigonometric noise basis and conservative noise increments.

use crate::error::{Error, Result};
use crate::grid::{face_average, flux_divergence, Field, TorusGrid};
use crate::rng::NormalKey;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Parity {
    Cos,
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseMode {
    pub k: u32,
    pub sigma: f64,
    pub parity: Parity,
}

/// `ψ(x) = c σ √2 cos(2πkx)` or `c σ √2 sin(2πkx)` for each listed mode.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseBasis {
    pub modes: Vec<NoiseMode>,
    pub amplitude_scale: f64,
}

impl NoiseBasis {
    pub fn empty() -> Self {
        Self {
            modes: Vec::new(),
            amplitude_scale: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    /// Number of distinct frequencies.
    pub fn levels(&self) -> usize {
        let mut ks: Vec<u32> = self.modes.iter().map(|m| m.k).collect();
        ks.sort_unstable();
        ks.dedup();
        ks.len()
    }

    pub fn amplitude(&self, mode: &NoiseMode) -> f64 {
        self.amplitude_scale * mode.sigma * SQRT_2
    }

    pub fn eval_mode(&self, mode: &NoiseMode, x: f64) -> f64 {
        let arg = 2.0 * PI * mode.k as f64 * x;
        let a = self.amplitude(mode);
        match mode.parity {
            Parity::Cos => a * arg.cos(),
            Parity::Sin => a * arg.sin(),
        }
    }

    /// Grid samples of every `ψ_k`, one row per mode.
    pub fn sample(&self, grid: TorusGrid) -> Vec<Vec<f64>> {
        self.modes
            .iter()
            .map(|m| grid.points().map(|x| self.eval_mode(m, x)).collect())
            .collect()
    }

    /// Copy without the given mode (used to build parity-incomplete bases).
    pub fn without(&self, k: u32, parity: Parity) -> Self {
        Self {
            modes: self
                .modes
                .iter()
                .copied()
                .filter(|m| !(m.k == k && m.parity == parity))
                .collect(),
            amplitude_scale: self.amplitude_scale,
        }
    }

    /// Every frequency carries both parities with equal amplitude.
    pub fn is_parity_complete(&self) -> bool {
        self.modes.iter().all(|m| {
            let other = match m.parity {
                Parity::Cos => Parity::Sin,
                Parity::Sin => Parity::Cos,
            };
            self.modes
                .iter()
                .any(|o| o.k == m.k && o.parity == other && o.sigma == m.sigma)
        })
    }
}

/// `σ_k = k^{-decay}`, `k = 1..=K`, each frequency with a cosine and a sine
/// mode.
pub fn build_trig_basis(levels: u32, decay: f64, c: f64) -> Result<NoiseBasis> {
    if levels == 0 {
        return Err(Error::InvalidNoise(
            "need at least one frequency level (K >= 1)".into(),
        ));
    }
    if !(decay > 2.5) {
        return Err(Error::InvalidNoise(format!(
            "decay = {decay} must exceed 5/2 so that sum sigma_k^2 k^4 (the W^(2,inf) sum) converges"
        )));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidNoise(format!(
            "amplitude scale must be positive, got {c}"
        )));
    }
    let mut modes = Vec::with_capacity(2 * levels as usize);
    for k in 1..=levels {
        let sigma = (k as f64).powf(-decay);
        modes.push(NoiseMode {
            k,
            sigma,
            parity: Parity::Cos,
        });
        modes.push(NoiseMode {
            k,
            sigma,
            parity: Parity::Sin,
        });
    }
    Ok(NoiseBasis {
        modes,
        amplitude_scale: c,
    })
}

/// Mean `C` of `Σ ψ_k²` on the grid and the largest pointwise deviation from it.
pub fn intensity_profile(basis: &NoiseBasis, grid: TorusGrid) -> (f64, f64) {
    let mut total = vec![0.0; grid.n()];
    for row in basis.sample(grid) {
        for (t, v) in total.iter_mut().zip(row) {
            *t += v * v;
        }
    }
    let mean = total.iter().sum::<f64>() / grid.n() as f64;
    let dev = total.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    (mean, dev)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RegularitySums {
    /// `Σ ‖ψ‖²_{W^{2,∞}}` with `‖f‖_{W^{2,∞}} = sup|f| + sup|f'| + sup|f''|`.
    pub w2inf: f64,
    /// `Σ ‖ψ‖²_{H²}` (exact mode norms).
    pub h2: f64,
}

/// Closed-form regularity sums over every mode of the basis.
pub fn regularity_sums(basis: &NoiseBasis) -> RegularitySums {
    let mut w2inf = 0.0;
    let mut h2 = 0.0;
    for m in &basis.modes {
        let a2 = basis.amplitude(m).powi(2);
        let w = 2.0 * PI * m.k as f64;
        w2inf += a2 * (1.0 + w + w * w).powi(2);
        // two Fourier coefficients of modulus a/2 each
        h2 += a2 * (1.0 + w * w).powi(2) * 0.5;
    }
    RegularitySums { w2inf, h2 }
}

/// Conservative increment `Σ_k ΔW_k D_flux(g ψ_k)` for prescribed Brownian
/// increments, where `D_flux` differences arithmetic face averages.
pub fn noise_increment(basis_samples: &[Vec<f64>], g: &[f64], dw: &[f64], h: f64) -> Vec<f64> {
    let n = g.len();
    let mut w = vec![0.0; n];
    for (row, d) in basis_samples.iter().zip(dw) {
        for (wi, p) in w.iter_mut().zip(row) {
            *wi += d * p;
        }
    }
    for (wi, gi) in w.iter_mut().zip(g) {
        *wi *= gi;
    }
    flux_divergence(&face_average(&w), h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub xi: Vec<f64>,
    pub dt: f64,
    pub field: Field,
}

/// Draws `ξ_k ~ N(0,1)` from the keyed stream (`key.mode` is overwritten
/// per mode) and returns `Σ_k √dt ξ_k D_flux(g(u) ψ_k)`.
pub fn sample_increment(
    basis: &NoiseBasis,
    u: &Field,
    g_eval: impl Fn(f64) -> Result<f64>,
    dt: f64,
    key: NormalKey,
) -> Result<NoiseIncrement> {
    if !(dt >= 0.0) {
        return Err(Error::OutOfRange(format!("dt must be >= 0, got {dt}")));
    }
    let grid = u.grid();
    let g = u
        .values()
        .iter()
        .map(|&v| g_eval(v))
        .collect::<Result<Vec<f64>>>()?;
    let xi: Vec<f64> = (0..basis.len())
        .map(|k| {
            NormalKey {
                mode: k as u32,
                ..key
            }
            .normal()
        })
        .collect();
    let dw: Vec<f64> = xi.iter().map(|x| dt.sqrt() * x).collect();
    let samples = basis.sample(grid);
    let field = Field::new(grid, noise_increment(&samples, &g, &dw, grid.h()))?;
    Ok(NoiseIncrement { xi, dt, field })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{derived_coefficients, MobilitySpec};

    fn grid() -> TorusGrid {
        TorusGrid::new(64).unwrap()
    }

    #[test]
    fn basis_examples() {
        let b = build_trig_basis(1, 3.0, 1.0).unwrap();
        assert_eq!(b.len(), 2);
        let (c, dev) = intensity_profile(&b, grid());
        assert!((c - 2.0).abs() < 1e-14 && dev <= 1e-12);
        let b = build_trig_basis(2, 3.0, 1.0).unwrap();
        let (c, dev) = intensity_profile(&b, grid());
        assert!((c - 2.03125).abs() < 1e-14 && dev <= 1e-12);
        assert!(build_trig_basis(1, 2.0, 1.0).is_err());
        assert!(build_trig_basis(0, 3.0, 1.0).is_err());
    }

    #[test]
    fn intensity_of_incomplete_and_empty() {
        let b = build_trig_basis(3, 3.0, 0.7)
            .unwrap()
            .without(1, Parity::Sin);
        assert!(!b.is_parity_complete());
        let (c, dev) = intensity_profile(&b, grid());
        // cos² profile of amplitude 2c²σ₁² around its mean
        let expected = 2.0 * 0.49 * 0.5;
        assert!((dev - expected).abs() < 1e-12, "{dev} vs {expected}");
        assert!(c > 0.0);
        assert_eq!(intensity_profile(&NoiseBasis::empty(), grid()), (0.0, 0.0));
    }

    #[test]
    fn regularity_sum_examples() {
        let b = build_trig_basis(1, 3.0, 1.0).unwrap();
        let s = regularity_sums(&b);
        let w = 2.0 * PI;
        // two modes with (cσ√2)² = 2 each
        assert!((s.w2inf - 4.0 * (1.0 + w + w * w).powi(2)).abs() < 1e-9);
        assert!((s.h2 - 2.0 * (1.0 + w * w).powi(2)).abs() < 1e-9);
        let s2 = regularity_sums(&build_trig_basis(1, 3.0, 2.0).unwrap());
        assert!((s2.w2inf / s.w2inf - 4.0).abs() < 1e-14 && (s2.h2 / s.h2 - 4.0).abs() < 1e-14);
        let s3 = regularity_sums(&build_trig_basis(3, 3.0, 1.0).unwrap());
        let s4 = regularity_sums(&build_trig_basis(4, 3.0, 1.0).unwrap());
        let a2 = 2.0 * 4f64.powf(-6.0);
        let w4 = 8.0 * PI;
        assert!((s4.w2inf - s3.w2inf - 2.0 * a2 * (1.0 + w4 + w4 * w4).powi(2)).abs() < 1e-9);
        assert!((s4.h2 - s3.h2 - a2 * (1.0 + w4 * w4).powi(2)).abs() < 1e-9);
    }

    fn key() -> NormalKey {
        NormalKey {
            seed: 5,
            path: 0,
            step: 0,
            mode: 0,
            level: 0,
            node: 0,
        }
    }

    #[test]
    fn degenerate_increments_vanish() {
        let g = grid();
        let u = Field::constant(g, 1.0);
        let b = build_trig_basis(2, 3.0, 1.0).unwrap();
        let inc = sample_increment(&b, &u, |_| Ok(1.0), 0.0, key()).unwrap();
        assert!(inc.field.values().iter().all(|v| *v == 0.0));
        let inc = sample_increment(&NoiseBasis::empty(), &u, |_| Ok(1.0), 0.1, key()).unwrap();
        assert!(inc.field.values().iter().all(|v| *v == 0.0));
        assert!(inc.xi.is_empty());
    }

    #[test]
    fn single_mode_increment_statistics() {
        let g = grid();
        let u = Field::constant(g, 1.0);
        let m2 = MobilitySpec::power_law(2.0);
        let geval = |r: f64| derived_coefficients(&m2, None, r, 0.0).map(|d| d.g);
        let b = NoiseBasis {
            modes: vec![NoiseMode {
                k: 1,
                sigma: 1.0,
                parity: Parity::Cos,
            }],
            amplitude_scale: 0.5,
        };
        let dt = 1e-3;
        let psi = &b.sample(g)[0];
        // centered difference of ψ = flux difference of face averages
        let dpsi: Vec<f64> = (0..64)
            .map(|i| (psi[(i + 1) % 64] - psi[(i + 63) % 64]) / (2.0 * g.h()))
            .collect();
        let mut var = vec![0.0; 64];
        let draws = 10_000;
        for s in 0..draws {
            let inc = sample_increment(&b, &u, geval, dt, NormalKey { step: s, ..key() }).unwrap();
            assert!(inc.field.integrate().abs() < 1e-14);
            for (v, x) in var.iter_mut().zip(inc.field.values()) {
                *v += x * x;
            }
        }
        for i in 0..64 {
            let expected = dt * dpsi[i] * dpsi[i];
            if expected > 1e-3 * dt {
                assert!((var[i] / draws as f64 / expected - 1.0).abs() < 0.05);
            }
        }
    }

    #[test]
    fn increments_are_mass_neutral() {
        let g = grid();
        let u = Field::from_fn(g, |x| 1.0 + 0.4 * (2.0 * PI * x).sin()).unwrap();
        let b = build_trig_basis(6, 3.0, 0.8).unwrap();
        for s in 0..200 {
            let inc = sample_increment(&b, &u, |r| Ok(r * r), 0.01, NormalKey { step: s, ..key() })
                .unwrap();
            let maxv = inc
                .field
                .values()
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(inc.field.integrate().abs() <= 64.0 * f64::EPSILON * maxv);
        }
    }

    #[test]
    fn built_bases_have_constant_intensity() {
        for k in 1..12 {
            for decay in [2.6, 3.0, 5.0] {
                let b = build_trig_basis(k, decay, 1.3).unwrap();
                assert!(b.is_parity_complete());
                for n in [16, 64, 128] {
                    assert!(intensity_profile(&b, TorusGrid::new(n).unwrap()).1 <= 1e-12);
                }
            }
        }
    }
}
