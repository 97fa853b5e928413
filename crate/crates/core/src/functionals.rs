//! Diagnostics along a trajectory: mass, energy, α-entropies and their
//! dissipation integrands, the γ-interval, the explicit sup bound and the
//! implicit-constant ratios, and the admissibility checker for the
//! regularity parameters.

use crate::coefficients::{MobilitySpec, PotentialSpec};
use crate::error::{Error, Result};
use crate::grid::{next, Field, TorusGrid};
use crate::quadrature::GaussLegendre;
use alloc::format;
use alloc::vec::Vec;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

/// Exact CSV header for [`DiagnosticsRow`] streams.
pub const CSV_HEADER: &str = "t,mass,min_u,max_u,energy,H_beta,D_energy,D1,D2,D3,h1_norm,dt";

fn require_positive(u: &Field) -> Result<()> {
    let min = u.min();
    if min > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveField { min })
    }
}

pub fn mass(u: &Field) -> f64 {
    u.integrate()
}

/// `h Σ [½ ((u_{i+1}-u_i)/h)² + φ(u_i)]`; without a potential only the
/// gradient part remains.
pub fn energy(u: &Field, pot: Option<&PotentialSpec>) -> Result<f64> {
    require_positive(u)?;
    let h = u.grid().h();
    let v = u.values();
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let d = (v[next(i, n)] - v[i]) / h;
        s += 0.5 * d * d;
        if let Some(p) = pot {
            s += p.eval_unchecked(v[i]).value;
        }
    }
    Ok(h * s)
}

const CACHE_PER_DECADE: usize = 100;
const CACHE_DECADES: i32 = 8;

/// Convex density `h_β` with `h_β(1) = h_β'(1) = 0` and `h_β'' = r^β/m`.
#[derive(Debug, Clone)]
pub struct EntropyDensity {
    mobility: MobilitySpec,
    beta: f64,
    cache: Option<HermiteTable>,
}

/// Cubic Hermite table of `(h, h')` on a logarithmic grid.
#[derive(Debug, Clone)]
struct HermiteTable {
    log_lo: f64,
    step: f64,
    r: Vec<f64>,
    h: Vec<f64>,
    dh: Vec<f64>,
}

impl HermiteTable {
    fn build(ed: &EntropyDensity) -> Self {
        let count = 2 * CACHE_DECADES as usize * CACHE_PER_DECADE + 1;
        let log_lo = -(CACHE_DECADES as f64) * core::f64::consts::LN_10;
        let step = core::f64::consts::LN_10 / CACHE_PER_DECADE as f64;
        let centre = CACHE_DECADES as usize * CACHE_PER_DECADE;
        let r: Vec<f64> = (0..count)
            .map(|i| {
                if i == centre {
                    1.0
                } else {
                    (log_lo + step * i as f64).exp()
                }
            })
            .collect();
        let gl = GaussLegendre::new(16);
        let mut h = alloc::vec![0.0; count];
        let mut dh = alloc::vec![0.0; count];
        // march outward from r = 1 using exact per-cell increments
        for i in centre + 1..count {
            let (a, b) = (r[i - 1], r[i]);
            let d1 = gl.integrate(a, b, |s| ed.second_derivative(s));
            let d0 = gl.integrate(a, b, |s| (b - s) * ed.second_derivative(s));
            dh[i] = dh[i - 1] + d1;
            h[i] = h[i - 1] + dh[i - 1] * (b - a) + d0;
        }
        for i in (0..centre).rev() {
            let (a, b) = (r[i], r[i + 1]);
            let d1 = gl.integrate(a, b, |s| ed.second_derivative(s));
            let d0 = gl.integrate(a, b, |s| (s - a) * ed.second_derivative(s));
            dh[i] = dh[i + 1] - d1;
            h[i] = h[i + 1] - dh[i + 1] * (b - a) + d0;
        }
        Self {
            log_lo,
            step,
            r,
            h,
            dh,
        }
    }

    fn lookup(&self, x: f64) -> Option<f64> {
        let pos = (x.ln() - self.log_lo) / self.step;
        if !(pos >= 0.0) || pos >= (self.r.len() - 1) as f64 {
            return None;
        }
        let mut i = pos as usize;
        // the nodes are exact exponentials; correct off-by-one from rounding
        while i > 0 && x < self.r[i] {
            i -= 1;
        }
        while i + 2 < self.r.len() && x > self.r[i + 1] {
            i += 1;
        }
        let (a, b) = (self.r[i], self.r[i + 1]);
        let w = b - a;
        let s = (x - a) / w;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Some(
            h00 * self.h[i] + h10 * w * self.dh[i] + h01 * self.h[i + 1] + h11 * w * self.dh[i + 1],
        )
    }
}

impl EntropyDensity {
    pub fn new(mobility: MobilitySpec, beta: f64) -> Result<Self> {
        if !(beta > -0.5 && beta < 1.0) {
            return Err(Error::OutOfRange(format!(
                "entropy exponent beta = {beta} outside (-1/2, 1)"
            )));
        }
        let mut ed = Self {
            mobility,
            beta,
            cache: None,
        };
        if !matches!(ed.mobility, MobilitySpec::PowerLaw { .. }) {
            ed.cache = Some(HermiteTable::build(&ed));
        }
        Ok(ed)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mobility(&self) -> &MobilitySpec {
        &self.mobility
    }

    /// `h_β''(r) = r^β / m(r)`.
    pub fn second_derivative(&self, r: f64) -> f64 {
        r.powf(self.beta) / self.mobility.eval_unchecked(r).value
    }

    /// Closed form for power-law mobilities, `None` otherwise.
    pub fn closed_form(&self, r: f64) -> Option<f64> {
        let MobilitySpec::PowerLaw { n } = self.mobility else {
            return None;
        };
        let a = self.beta - n;
        let lr = r.ln();
        if a == -2.0 {
            // r - 1 - log r
            return Some((r - 1.0) - lr);
        }
        if a == -1.0 {
            return Some(r * lr - r + 1.0);
        }
        // (1/(a+1)) ((r^{a+2} - 1)/(a+2) - r + 1)
        let b = a + 2.0;
        Some(((b * lr).exp_m1() / b - (r - 1.0)) / (a + 1.0))
    }

    /// `∫₁^r (r - s) s^β / m(s) ds` by Gauss–Legendre (order 16) on panels
    /// split at powers of two between 1 and `r`.
    pub fn quadrature(&self, r: f64) -> f64 {
        if r == 1.0 {
            return 0.0;
        }
        let gl = GaussLegendre::new(16);
        let f = |s: f64| (r - s) * self.second_derivative(s);
        let mut total = 0.0;
        let mut a = 1.0f64;
        if r > 1.0 {
            while a < r {
                let b = (2.0 * a).min(r);
                total += gl.integrate(a, b, f);
                a = b;
            }
            total
        } else {
            while a > r {
                let b = (0.5 * a).max(r);
                // ∫₁^r = -∫_r^1, and (r - s) ≤ 0 there, so the sign cancels
                total -= gl.integrate(b, a, f);
                a = b;
            }
            total
        }
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::NonPositiveArgument(r));
        }
        if let Some(v) = self.closed_form(r) {
            return Ok(v);
        }
        if let Some(v) = self.cache.as_ref().and_then(|c| c.lookup(r)) {
            return Ok(v);
        }
        Ok(self.quadrature(r))
    }
}

pub fn entropy_density(ed: &EntropyDensity, r: f64) -> Result<f64> {
    ed.eval(r)
}

/// `H_β(u) = h Σ h_β(u_i)`.
pub fn alpha_entropy(u: &Field, ed: &EntropyDensity) -> Result<f64> {
    require_positive(u)?;
    let mut s = 0.0;
    for &v in u.values() {
        s += ed.eval(v)?;
    }
    Ok(s * u.grid().h())
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Dissipations {
    pub d_energy: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// Endpoints of the admissible γ-interval
/// `[(β+2 ∓ √((1-β)(1+2β)))/3]`.
pub fn gamma_range(beta: f64) -> Result<(f64, f64)> {
    if !(beta > -0.5 && beta < 1.0) {
        return Err(Error::OutOfRange(format!(
            "beta = {beta} outside (-1/2, 1)"
        )));
    }
    let root = ((1.0 - beta) * (1.0 + 2.0 * beta)).sqrt();
    Ok(((beta + 2.0 - root) / 3.0, (beta + 2.0 + root) / 3.0))
}

/// Coefficient `c(β,γ)` in
/// `-∫u^β u_x u_xxx = γ^{-2}∫u^{β+2-2γ}(u^γ)_xx² + c(β,γ)∫u^{β-2}u_x⁴`,
/// i.e. `c = (1-β)(β+2-2γ)/3 - (γ-1)²`. It vanishes exactly at the
/// endpoints of [`gamma_range`].
pub fn entropy_coefficient(beta: f64, gamma: f64) -> f64 {
    (1.0 - beta) * (beta + 2.0 - 2.0 * gamma) / 3.0 - (gamma - 1.0).powi(2)
}

/// Residual `(-∫u^β u_x u_xxx - γ^{-2}∫u^{β+2-2γ}(u^γ)_xx²) / ∫u^{β-2}u_x⁴`
/// evaluated with spectral derivatives; it should reproduce
/// [`entropy_coefficient`] for smooth positive `u`.
pub fn entropy_residual(u: &Field, beta: f64, gamma: f64) -> Result<f64> {
    require_positive(u)?;
    let ux = u.spectral_diff(1)?;
    let uxxx = u.spectral_diff(3)?;
    let ug = u.map(|v| v.powf(gamma))?;
    let ug_xx = ug.spectral_diff(2)?;
    let h = u.grid().h();
    let (mut lhs, mut d2, mut c) = (0.0, 0.0, 0.0);
    for i in 0..u.len() {
        let v = u.values()[i];
        let d = ux.values()[i];
        lhs -= v.powf(beta) * d * uxxx.values()[i];
        d2 += v.powf(beta + 2.0 - 2.0 * gamma) * ug_xx.values()[i].powi(2);
        c += v.powf(beta - 2.0) * d.powi(4);
    }
    Ok(h * (lhs - d2 / (gamma * gamma)) / (h * c))
}

/// The energy and entropy dissipation integrands. Without a potential the
/// `ϑ` in `D1` is taken as 0.
pub fn dissipations(
    u: &Field,
    mob: &MobilitySpec,
    pot: Option<&PotentialSpec>,
    beta: f64,
    gamma: f64,
) -> Result<Dissipations> {
    require_positive(u)?;
    let (lo, hi) = gamma_range(beta)?;
    let slack = 1e-12 * hi.abs().max(1.0);
    if !(gamma >= lo - slack && gamma <= hi + slack) {
        return Err(Error::OutOfRange(format!(
            "gamma = {gamma} outside [{lo}, {hi}] for beta = {beta}"
        )));
    }
    let theta = pot.map_or(0.0, |p| p.theta());
    let grid = u.grid();
    let v = u.values();
    let uxx = u.fd_diff(2)?;
    let w: Vec<f64> = v
        .iter()
        .zip(uxx.values())
        .map(|(&x, &d2)| d2 - pot.map_or(0.0, |p| p.eval_unchecked(x).d1))
        .collect();
    let wx = Field::from_parts(grid, w).fd_diff(1)?;
    let ux = u.fd_diff(1)?;
    let ug_xx = u.map(|x| x.powf(gamma))?.fd_diff(2)?;
    let (mut de, mut d1, mut d2, mut d3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..v.len() {
        let x = v[i];
        let d = ux.values()[i];
        de += mob.eval_unchecked(x).value * wx.values()[i].powi(2);
        d1 += x.powf(beta - theta - 2.0) * d * d;
        d2 += x.powf(beta - 2.0 * gamma + 2.0) * ug_xx.values()[i].powi(2);
        d3 += x.powf(beta - 2.0) * d.powi(4);
    }
    let h = grid.h();
    Ok(Dissipations {
        d_energy: h * de,
        d1: h * d1,
        d2: h * d2,
        d3: h * d3,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SupBound {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `sup f^{β-ϑ} ≤ ((β-ϑ)²/2) ∫ f^{β-ϑ-2} f_x² + 2 (∫f)^{β-ϑ}`, evaluated on
/// the grid with centered differences.
pub fn check_sup_bound_explicit(f: &Field, beta: f64, theta: f64) -> Result<SupBound> {
    require_positive(f)?;
    if !(beta > -0.5 && beta < 1.0) {
        return Err(Error::OutOfRange(format!(
            "beta = {beta} outside (-1/2, 1)"
        )));
    }
    if !(theta > 2.0) {
        return Err(Error::OutOfRange(format!("theta = {theta} must exceed 2")));
    }
    let e = beta - theta;
    let lhs = f.values().iter().fold(0.0f64, |m, &v| m.max(v.powf(e)));
    let fx = f.fd_diff(1)?;
    let grad: f64 = f
        .values()
        .iter()
        .zip(fx.values())
        .map(|(&v, &d)| v.powf(e - 2.0) * d * d)
        .sum::<f64>()
        * f.grid().h();
    let rhs = 0.5 * e * e * grad + 2.0 * f.integrate().powf(e);
    Ok(SupBound {
        lhs,
        rhs,
        pass: lhs <= rhs * (1.0 + 1e-8),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SupRatios {
    pub r_313: f64,
    pub r_energy_min: f64,
    pub r_energy_max: f64,
}

/// Left side over constant-free right side for the three implicit-constant
/// bounds. `ϑ` and the energy come from `pot`.
pub fn sup_bound_ratios(f: &Field, beta: f64, pot: &PotentialSpec) -> Result<SupRatios> {
    require_positive(f)?;
    let theta = pot.theta();
    let mass = f.integrate();
    let en = energy(f, Some(pot))?;
    let sup = |e: f64| f.values().iter().fold(0.0f64, |m, &v| m.max(v.powf(e)));
    let fx = f.fd_diff(1)?;
    let d3: f64 = f
        .values()
        .iter()
        .zip(fx.values())
        .map(|(&v, &d)| v.powf(beta - 2.0) * d.powi(4))
        .sum::<f64>()
        * f.grid().h();
    let r_313 = sup(beta + 5.0) / (d3 * mass.powi(3) + mass.powf(beta + 5.0));
    let em = (2.0 - theta) / 2.0;
    let r_energy_min = sup(em) / (en + mass.powf(em));
    let r_energy_max = sup(3.0) / (en * mass + mass.powi(3));
    Ok(SupRatios {
        r_313,
        r_energy_min,
        r_energy_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AdmissibilityReport {
    /// `p > 2, κ ∈ [0, p/2 - 1)` or `q = p = 2, κ = 0`.
    pub weight_ok: bool,
    /// `s + 2 - 4(1+κ)/p - d/q > 0`.
    pub embedding_ok: bool,
    /// `s + 2 - 4(1+κ)/p > 1 - s`.
    pub trace_ok: bool,
    pub trace_smoothness: f64,
    pub admissible: bool,
}

pub fn check_admissible(p: f64, kappa: f64, s: f64, q: f64, d: u32) -> AdmissibilityReport {
    let weight_ok = (p > 2.0 && kappa >= 0.0 && kappa < p / 2.0 - 1.0)
        || (q == 2.0 && p == 2.0 && kappa == 0.0);
    let trace_smoothness = s + 2.0 - 4.0 * (1.0 + kappa) / p;
    let embedding_ok = trace_smoothness - d as f64 / q > 0.0;
    let trace_ok = trace_smoothness > 1.0 - s;
    AdmissibilityReport {
        weight_ok,
        embedding_ok,
        trace_ok,
        trace_smoothness,
        admissible: weight_ok && embedding_ok && trace_ok,
    }
}

/// `exp` of a band-limited Gaussian field: random amplitude in
/// `[0.1, 1.5]`, modes `1..=modes` with `1/k` decay, random offset. Fully
/// determined by `(seed, index)`.
pub fn random_positive_field(grid: TorusGrid, modes: u32, seed: u64, index: u64) -> Field {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(b"corpus01");
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let offset = 0.5 * normal();
    let coeffs: Vec<(f64, f64)> = (1..=modes)
        .map(|k| (normal() / k as f64, normal() / k as f64))
        .collect();
    let raw = {
        let u: f64 = (normal() * 0.5).tanh();
        0.8 + 0.7 * u
    };
    let norm = coeffs
        .iter()
        .map(|(a, b)| a * a + b * b)
        .sum::<f64>()
        .sqrt()
        .max(1e-12);
    let tau = 2.0 * core::f64::consts::PI;
    let values = grid
        .points()
        .map(|x| {
            let g: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(j, (a, b))| {
                    let w = tau * (j + 1) as f64 * x;
                    a * w.cos() + b * w.sin()
                })
                .sum();
            (offset + raw * g / norm).exp()
        })
        .collect();
    Field::from_parts(grid, values)
}

/// One sample of the trajectory diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mass: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub energy: f64,
    pub h_beta: f64,
    pub d_energy: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub h1_norm: f64,
    pub dt: f64,
}

impl DiagnosticsRow {
    /// Values in [`CSV_HEADER`] order.
    pub fn fields(&self) -> [f64; 12] {
        [
            self.t,
            self.mass,
            self.min_u,
            self.max_u,
            self.energy,
            self.h_beta,
            self.d_energy,
            self.d1,
            self.d2,
            self.d3,
            self.h1_norm,
            self.dt,
        ]
    }
}

/// Everything needed to evaluate a [`DiagnosticsRow`].
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub mobility: MobilitySpec,
    pub potential: Option<PotentialSpec>,
    pub entropy: EntropyDensity,
    pub gamma: f64,
}

impl Diagnostics {
    pub fn new(
        mobility: MobilitySpec,
        potential: Option<PotentialSpec>,
        beta: f64,
        gamma: f64,
    ) -> Result<Self> {
        let entropy = EntropyDensity::new(mobility.clone(), beta)?;
        gamma_range(beta)?;
        Ok(Self {
            mobility,
            potential,
            entropy,
            gamma,
        })
    }

    /// Default `β = max(0, ν - 5) + 0.01` and `γ` at the centre of its
    /// interval.
    pub fn default_beta(mobility: &MobilitySpec) -> f64 {
        let (_, nu) = mobility.exponents();
        (nu - 5.0).max(0.0) + 0.01
    }

    pub fn row(&self, t: f64, u: &Field, dt: f64) -> Result<DiagnosticsRow> {
        let beta = self.entropy.beta();
        let dis = dissipations(u, &self.mobility, self.potential.as_ref(), beta, self.gamma)?;
        Ok(DiagnosticsRow {
            t,
            mass: mass(u),
            min_u: u.min(),
            max_u: u.max(),
            energy: energy(u, self.potential.as_ref())?,
            h_beta: alpha_entropy(u, &self.entropy)?,
            d_energy: dis.d_energy,
            d1: dis.d1,
            d2: dis.d2,
            d3: dis.d3,
            h1_norm: u.sobolev_norm(1.0)?,
            dt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{E, PI};

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn mass_and_energy_examples() {
        let g = grid(64);
        assert!((mass(&Field::constant(g, 1.0)) - 1.0).abs() < 1e-15);
        let u = Field::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x).sin()).unwrap();
        assert!((mass(&u) - 1.0).abs() < 1e-14);
        let lj = PotentialSpec::lennard_jones(8.0, 1.0);
        assert!((energy(&Field::constant(g, 1.0), Some(&lj)).unwrap() - 1.0).abs() < 1e-14);
        let c = 1.7;
        let e = energy(&Field::constant(g, c), Some(&lj)).unwrap();
        assert!(rel(e, c.powi(-8) - c.powi(-2) + 1.0) < 1e-14);
        // gradient part of a single harmonic tends to a²(2π)²/4
        let target = 0.25 * 0.01 * (2.0 * PI).powi(2);
        let g = grid(1024);
        let u = Field::from_fn(g, |x| 1.0 + 0.1 * (2.0 * PI * x).sin()).unwrap();
        assert!(rel(energy(&u, None).unwrap(), target) < 1e-4);
        assert!(energy(&Field::constant(g, 0.0), None).is_err());
    }

    #[test]
    fn entropy_density_examples() {
        let ed = EntropyDensity::new(MobilitySpec::power_law(2.0), 0.0).unwrap();
        assert!((ed.eval(2.0).unwrap() - 0.306_852_819_44).abs() < 1e-11);
        let ed = EntropyDensity::new(MobilitySpec::power_law(1.0), 0.0).unwrap();
        assert!((ed.eval(E).unwrap() - 1.0).abs() < 1e-14);
        for m in [MobilitySpec::power_law(3.0), MobilitySpec::slip(0.5, 2.0)] {
            let ed = EntropyDensity::new(m, 0.3).unwrap();
            assert_eq!(ed.eval(1.0).unwrap(), 0.0);
        }
        assert!(ed.eval(0.0).is_err());
        assert!(EntropyDensity::new(MobilitySpec::power_law(2.0), 1.0).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for n in [0.0, 1.0, 2.0, 3.0, 4.0] {
            for beta in [-0.4, 0.0, 0.5, 0.9] {
                let ed = EntropyDensity::new(MobilitySpec::power_law(n), beta).unwrap();
                for i in 0..200 {
                    let r = 10f64.powf(-3.0 + 6.0 * i as f64 / 199.0);
                    let a = ed.closed_form(r).unwrap();
                    let b = ed.quadrature(r);
                    assert!(rel(a, b) < 1e-10, "n={n} beta={beta} r={r}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn cached_density_is_convex_and_matches_quadrature() {
        let ed = EntropyDensity::new(MobilitySpec::slip(0.3, 1.5), 0.2).unwrap();
        let rs: Vec<f64> = (0..400)
            .map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 399.0))
            .collect();
        for &r in &rs {
            let a = ed.eval(r).unwrap();
            let b = ed.quadrature(r);
            assert!(
                (a - b).abs() <= 1e-8 * b.abs().max(1e-12),
                "r={r}: {a} vs {b}"
            );
        }
        let vals: Vec<f64> = rs.iter().map(|&r| ed.eval(r).unwrap()).collect();
        for i in 1..rs.len() - 1 {
            // second divided difference on a nonuniform grid
            let d1 = (vals[i] - vals[i - 1]) / (rs[i] - rs[i - 1]);
            let d2 = (vals[i + 1] - vals[i]) / (rs[i + 1] - rs[i]);
            assert!(d2 - d1 >= -1e-12 * d2.abs().max(1.0));
        }
    }

    #[test]
    fn alpha_entropy_examples() {
        let g = grid(32);
        let ed = EntropyDensity::new(MobilitySpec::power_law(2.0), 0.0).unwrap();
        assert_eq!(alpha_entropy(&Field::constant(g, 1.0), &ed).unwrap(), 0.0);
        let v = alpha_entropy(&Field::constant(g, 2.0), &ed).unwrap();
        assert!((v - (1.0 - 2f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn gamma_range_endpoints_are_roots() {
        let (lo, hi) = gamma_range(0.0).unwrap();
        assert!((lo - 1.0 / 3.0).abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
        for beta in [-0.45, -0.2, 0.0, 0.3, 0.7, 0.95] {
            let (lo, hi) = gamma_range(beta).unwrap();
            assert!(entropy_coefficient(beta, lo).abs() < 1e-14);
            assert!(entropy_coefficient(beta, hi).abs() < 1e-14);
            assert!(entropy_coefficient(beta, 0.5 * (lo + hi)) > 0.0);
        }
        let (lo, hi) = gamma_range(1.0 - 1e-12).unwrap();
        assert!(hi - lo < 1e-5 && (lo - 1.0).abs() < 1e-5);
        let (lo, hi) = gamma_range(-0.5 + 1e-12).unwrap();
        assert!(hi - lo < 1e-5 && (lo - 0.5).abs() < 1e-5);
        assert!(gamma_range(1.0).is_err() && gamma_range(-0.5).is_err());
    }

    #[test]
    fn entropy_residual_matches_coefficient() {
        let g = grid(256);
        for idx in 0..20 {
            let u = random_positive_field(g, 4, 17, idx);
            for beta in [-0.3, 0.0, 0.6] {
                let (lo, hi) = gamma_range(beta).unwrap();
                for gamma in [lo, hi] {
                    let r = entropy_residual(&u, beta, gamma).unwrap();
                    assert!(r >= -1e-8, "beta={beta} gamma={gamma} residual={r}");
                }
                let mid = 0.5 * (lo + hi);
                let r = entropy_residual(&u, beta, mid).unwrap();
                assert!((r - entropy_coefficient(beta, mid)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn dissipation_examples() {
        let g = grid(128);
        let mob = MobilitySpec::power_law(2.0);
        let lj = PotentialSpec::lennard_jones(8.0, 1.0);
        let d = dissipations(&Field::constant(g, 1.3), &mob, Some(&lj), 0.0, 1.0).unwrap();
        assert_eq!((d.d_energy, d.d1, d.d2, d.d3), (0.0, 0.0, 0.0, 0.0));
        let u = Field::from_fn(g, |x| 1.0 + 0.25 * (2.0 * PI * x).sin()).unwrap();
        let d = dissipations(&u, &mob, Some(&lj), 0.0, 1.0).unwrap();
        let ux = u.spectral_diff(1).unwrap();
        let spectral: f64 = u
            .values()
            .iter()
            .zip(ux.values())
            .map(|(v, d)| v.powi(-2) * d.powi(4))
            .sum::<f64>()
            * g.h();
        assert!(rel(d.d3, spectral) < 5.0 * (2.0 * PI * g.h()).powi(2));
        let u2 = u.map(|v| 2.0 * v).unwrap();
        let beta = 0.3;
        let a = dissipations(&u, &mob, Some(&lj), beta, 1.0).unwrap().d3;
        let b = dissipations(&u2, &mob, Some(&lj), beta, 1.0).unwrap().d3;
        assert!(rel(b, a * 2f64.powf(beta + 2.0)) < 1e-13);
        assert!(dissipations(&u, &mob, Some(&lj), 0.0, 1.5).is_err());
    }

    #[test]
    fn sup_bound_examples() {
        let g = grid(128);
        let c = 1.4;
        let b = check_sup_bound_explicit(&Field::constant(g, c), 0.0, 8.0).unwrap();
        assert!(rel(b.lhs, c.powi(-8)) < 1e-13 && rel(b.rhs, 2.0 * c.powi(-8)) < 1e-13 && b.pass);
        let f = Field::from_fn(g, |x| 1.0 + 0.9 * (2.0 * PI * x).sin()).unwrap();
        assert!(check_sup_bound_explicit(&f, 0.0, 3.0).unwrap().pass);
        for i in 0..200 {
            let f = random_positive_field(g, 8, 5, i);
            for beta in [-0.4, 0.0, 0.5] {
                for theta in [3.0, 8.0] {
                    let b = check_sup_bound_explicit(&f, beta, theta).unwrap();
                    assert!(b.pass, "field {i}: {b:?}");
                }
            }
        }
    }

    #[test]
    fn ratio_examples() {
        let g = grid(64);
        let lj = PotentialSpec::lennard_jones(8.0, 1.0);
        let r = sup_bound_ratios(&Field::constant(g, 1.0), 0.0, &lj).unwrap();
        assert!((r.r_313 - 1.0).abs() < 1e-15);
        let f = random_positive_field(g, 6, 2, 0);
        let a = sup_bound_ratios(&f, 0.0, &lj).unwrap().r_313;
        let b = sup_bound_ratios(&f.map(|v| 1e3 * v).unwrap(), 0.0, &lj)
            .unwrap()
            .r_313;
        assert!(rel(a, b) < 1e-10);
    }

    #[test]
    fn admissibility_examples() {
        let r = check_admissible(2.0, 0.0, 1.0, 2.0, 1);
        assert!(r.admissible && (r.trace_smoothness - 1.0).abs() < 1e-15);
        let r = check_admissible(2.0, 0.0, 0.4, 2.0, 1);
        assert!(!r.trace_ok && !r.admissible);
        let r = check_admissible(4.0, 0.0, 1.0, 2.0, 2);
        assert!(r.admissible && (r.trace_smoothness - 2.0).abs() < 1e-15);
        assert!(!check_admissible(4.0, 1.0, 1.0, 2.0, 1).weight_ok);
    }

    #[test]
    fn corpus_is_positive_and_reproducible() {
        let g = grid(64);
        let a = random_positive_field(g, 8, 1, 3);
        assert!(a.min() > 0.0);
        assert_eq!(a, random_positive_field(g, 8, 1, 3));
        assert_ne!(a, random_positive_field(g, 8, 1, 4));
    }
}
