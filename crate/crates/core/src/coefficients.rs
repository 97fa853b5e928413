//! Mobility and interface-potential families with analytic derivatives,
//! assumption validators, the coefficients derived from them, and the smooth
//! cutoff regularization used to extend coefficients to all of ℝ.

use crate::error::{Error, Result};
use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Number of log-spaced probe points on `[1e-8, 1e8]` used by the validators.
pub const PROBE_POINTS: usize = 400;
pub const PROBE_MIN: f64 = 1e-8;
pub const PROBE_MAX: f64 = 1e8;

/// Log-spaced probe grid on `[PROBE_MIN, PROBE_MAX]`.
pub fn probe_grid() -> Vec<f64> {
    let (lo, hi) = (PROBE_MIN.ln(), PROBE_MAX.ln());
    (0..PROBE_POINTS)
        .map(|i| (lo + (hi - lo) * i as f64 / (PROBE_POINTS - 1) as f64).exp())
        .collect()
}

/// Value and first two derivatives of a scalar coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    fn new(value: f64, d1: f64, d2: f64) -> Self {
        Self { value, d1, d2 }
    }
}

fn power_jet(c: f64, n: f64, r: f64) -> Jet {
    let p2 = if n.fract() == 0.0 && n.abs() < 64.0 {
        r.powi(n as i32 - 2)
    } else {
        r.powf(n - 2.0)
    };
    let p1 = p2 * r;
    Jet::new(c * p1 * r, c * n * p1, c * n * (n - 1.0) * p2)
}

fn check_positive(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveArgument(r))
    }
}

/// Mobility family `m`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum MobilitySpec {
    /// `m(r) = r^n`.
    PowerLaw { n: f64 },
    /// `m(r) = Σ c_j r^{n_j}`; each term is `(c_j, n_j)`.
    MixedPowers { terms: Vec<(f64, f64)> },
    /// `m_δ = m·m̃ / (δ m + m̃)`.
    NonlinearInterp {
        delta: f64,
        inner: Box<MobilitySpec>,
        inner2: Box<MobilitySpec>,
    },
}

impl MobilitySpec {
    pub fn power_law(n: f64) -> Self {
        MobilitySpec::PowerLaw { n }
    }

    /// Lubrication mobility `r³ + λ^{3-n} rⁿ`.
    pub fn slip(lambda: f64, n: f64) -> Self {
        MobilitySpec::MixedPowers {
            terms: alloc::vec![(1.0, 3.0), (lambda.powf(3.0 - n), n)],
        }
    }

    pub fn interp(delta: f64, a: MobilitySpec, b: MobilitySpec) -> Self {
        MobilitySpec::NonlinearInterp {
            delta,
            inner: Box::new(a),
            inner2: Box::new(b),
        }
    }

    /// `(m, m', m'')` at `r > 0`.
    pub fn eval(&self, r: f64) -> Result<Jet> {
        check_positive(r)?;
        Ok(self.eval_unchecked(r))
    }

    pub(crate) fn eval_unchecked(&self, r: f64) -> Jet {
        match self {
            MobilitySpec::PowerLaw { n } => power_jet(1.0, *n, r),
            MobilitySpec::MixedPowers { terms } => {
                terms.iter().fold(Jet::new(0.0, 0.0, 0.0), |acc, &(c, n)| {
                    let t = power_jet(c, n, r);
                    Jet::new(acc.value + t.value, acc.d1 + t.d1, acc.d2 + t.d2)
                })
            }
            MobilitySpec::NonlinearInterp {
                delta,
                inner,
                inner2,
            } => {
                let a = inner.eval_unchecked(r);
                let b = inner2.eval_unchecked(r);
                // N = a b, D = δ a + b, m = N / D
                let num = a.value * b.value;
                let num1 = a.d1 * b.value + a.value * b.d1;
                let num2 = a.d2 * b.value + 2.0 * a.d1 * b.d1 + a.value * b.d2;
                let den = delta * a.value + b.value;
                let den1 = delta * a.d1 + b.d1;
                let den2 = delta * a.d2 + b.d2;
                let m = num / den;
                let m1 = (num1 * den - num * den1) / (den * den);
                let m2 = (num2 - 2.0 * m1 * den1 - m * den2) / den;
                Jet::new(m, m1, m2)
            }
        }
    }

    /// Exponents `(n, ν)` assigned to the family by construction: power laws
    /// use `(n, n)`, mixed powers `(min n_j, max n_j)`, nonlinear
    /// interpolation `(max{n, ñ}, min{ν, ν̃})`.
    pub fn exponents(&self) -> (f64, f64) {
        match self {
            MobilitySpec::PowerLaw { n } => (*n, *n),
            MobilitySpec::MixedPowers { terms } => {
                let lo = terms.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
                let hi = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            MobilitySpec::NonlinearInterp { inner, inner2, .. } => {
                let (n1, v1) = inner.exponents();
                let (n2, v2) = inner2.exponents();
                (n1.max(n2), v1.min(v2))
            }
        }
    }
}

/// Interface potential `φ`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum PotentialSpec {
    /// `φ(r) = r^{-θ} - r^{-2} + c_θ`.
    LennardJonesType { theta: f64, c_theta: f64 },
    /// `φ(r) = r^{-θ}`.
    PurePower { theta: f64 },
}

impl PotentialSpec {
    pub fn lennard_jones(theta: f64, c_theta: f64) -> Self {
        PotentialSpec::LennardJonesType { theta, c_theta }
    }

    pub fn theta(&self) -> f64 {
        match self {
            PotentialSpec::LennardJonesType { theta, .. } | PotentialSpec::PurePower { theta } => {
                *theta
            }
        }
    }

    /// `(φ, φ', φ'')` at `r > 0`.
    pub fn eval(&self, r: f64) -> Result<Jet> {
        check_positive(r)?;
        Ok(self.eval_unchecked(r))
    }

    pub(crate) fn eval_unchecked(&self, r: f64) -> Jet {
        match self {
            PotentialSpec::LennardJonesType { theta, c_theta } => {
                let a = power_jet(1.0, -theta, r);
                let b = power_jet(1.0, -2.0, r);
                Jet::new(a.value - b.value + c_theta, a.d1 - b.d1, a.d2 - b.d2)
            }
            PotentialSpec::PurePower { theta } => power_jet(1.0, -theta, r),
        }
    }

    /// Smallest `c_θ` making the Lennard-Jones-type potential nonnegative:
    /// `-(r*^{-θ} - r*^{-2})` at the critical point `r* = (θ/2)^{1/(θ-2)}`.
    pub fn minimal_c_theta(theta: f64) -> f64 {
        let rs = (theta / 2.0).powf(1.0 / (theta - 2.0));
        -(rs.powf(-theta) - rs.powi(-2))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MobilityReport {
    /// Exponent of degeneracy.
    pub n: f64,
    /// Growth exponent.
    pub nu: f64,
    /// `sup r|m'|/m` on the probe grid.
    pub first_derivative_const: f64,
    /// `sup r²|m''|/m` on the probe grid.
    pub second_derivative_const: f64,
    /// `sup_{r ≤ 1} m/rⁿ` and `inf_{r ≤ 1} m/r^{n+2}`.
    pub small_r_upper: f64,
    pub small_r_lower: f64,
    /// `sup_{r ≥ 1} m/r^ν` and `inf_{r ≥ 1} m`.
    pub large_r_upper: f64,
    pub large_r_lower: f64,
}

fn structural_checks(spec: &MobilitySpec) -> Result<()> {
    match spec {
        MobilitySpec::PowerLaw { n } => {
            if !(0.0..6.0).contains(n) {
                return Err(Error::InvalidMobility(format!(
                    "power law requires n in [0, 6), got {n}"
                )));
            }
        }
        MobilitySpec::MixedPowers { terms } => {
            if terms.is_empty() {
                return Err(Error::InvalidMobility(
                    "mixed powers need at least one term".into(),
                ));
            }
            if let Some(&(c, _)) = terms.iter().find(|t| !(t.0 > 0.0)) {
                return Err(Error::InvalidMobility(format!(
                    "mixed-power coefficient must be positive, got {c}"
                )));
            }
            if let Some(&(_, n)) = terms.iter().find(|t| !(t.1 < 6.0)) {
                return Err(Error::InvalidMobility(format!(
                    "mixed-power exponent must be < 6, got {n}"
                )));
            }
            if !(terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max) >= 0.0) {
                return Err(Error::InvalidMobility(
                    "largest mixed-power exponent must be >= 0".into(),
                ));
            }
        }
        MobilitySpec::NonlinearInterp {
            delta,
            inner,
            inner2,
        } => {
            if !(*delta > 0.0) {
                return Err(Error::InvalidMobility(format!(
                    "interpolation needs delta > 0, got {delta}"
                )));
            }
            structural_checks(inner)?;
            structural_checks(inner2)?;
        }
    }
    Ok(())
}

/// Validates the mobility against the degeneracy/growth/derivative
/// conditions, certifying the asymptotic ones on the probe grid only.
pub fn validate_mobility(spec: &MobilitySpec) -> Result<MobilityReport> {
    structural_checks(spec)?;
    let (n, nu) = spec.exponents();
    if !(0.0..6.0).contains(&nu) {
        return Err(Error::InvalidMobility(format!(
            "growth exponent must lie in [0, 6), got {nu}"
        )));
    }
    let probe = probe_grid();
    let mut rep = MobilityReport {
        n,
        nu,
        first_derivative_const: 0.0,
        second_derivative_const: 0.0,
        small_r_upper: 0.0,
        small_r_lower: f64::INFINITY,
        large_r_upper: 0.0,
        large_r_lower: f64::INFINITY,
    };
    let mut first_small = None;
    let mut mid_small = 0.0f64;
    for &r in &probe {
        let j = spec.eval_unchecked(r);
        if !(j.value > 0.0) || !j.value.is_finite() {
            return Err(Error::InvalidMobility(format!(
                "m({r:e}) = {} is not positive",
                j.value
            )));
        }
        rep.first_derivative_const = rep.first_derivative_const.max(r * j.d1.abs() / j.value);
        rep.second_derivative_const = rep
            .second_derivative_const
            .max(r * r * j.d2.abs() / j.value);
        if r <= 1.0 {
            let up = j.value / r.powf(n);
            rep.small_r_upper = rep.small_r_upper.max(up);
            rep.small_r_lower = rep.small_r_lower.min(j.value / r.powf(n + 2.0));
            first_small.get_or_insert(up);
            if r >= 1e-4 {
                mid_small = mid_small.max(up);
            }
        }
        if r >= 1.0 {
            rep.large_r_upper = rep.large_r_upper.max(j.value / r.powf(nu));
            rep.large_r_lower = rep.large_r_lower.min(j.value);
        }
    }
    // limsup m/rⁿ < ∞ as r ↘ 0: the ratio must not keep growing toward the
    // left end of the probe range
    if let Some(edge) = first_small {
        if edge > 10.0 * mid_small.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidMobility(format!(
                "m/r^{n} grows as r -> 0 ({edge:e} at r = {PROBE_MIN:e}); no admissible degeneracy exponent"
            )));
        }
    }
    if !(rep.small_r_lower > 0.0) || !(rep.large_r_lower > 0.0) || !rep.large_r_upper.is_finite() {
        return Err(Error::InvalidMobility(
            "liminf/limsup conditions fail on the probe grid".into(),
        ));
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PotentialReport {
    pub theta: f64,
    /// `min φ` on the probe grid.
    pub min_value: f64,
    /// Smallest `c_θ` keeping `φ > 0` (Lennard-Jones-type only).
    pub minimal_c_theta: Option<f64>,
}

pub fn validate_potential(spec: &PotentialSpec) -> Result<PotentialReport> {
    let theta = spec.theta();
    if !(theta > 2.0) {
        return Err(Error::InvalidPotential(format!(
            "theta must exceed 2, got {theta}"
        )));
    }
    let min_value = probe_grid()
        .iter()
        .map(|&r| spec.eval_unchecked(r).value)
        .fold(f64::INFINITY, f64::min);
    let minimal_c_theta = match spec {
        PotentialSpec::LennardJonesType { .. } => {
            // probe-grid minimum of r^{-θ} - r^{-2}
            let probe_min = probe_grid()
                .iter()
                .map(|&r| r.powf(-theta) - r.powi(-2))
                .fold(f64::INFINITY, f64::min);
            Some((-probe_min).max(PotentialSpec::minimal_c_theta(theta)))
        }
        PotentialSpec::PurePower { .. } => None,
    };
    if !(min_value > 0.0) {
        return Err(Error::InvalidPotential(format!(
            "potential is not positive on the probe grid (min {min_value:e}); c_theta must exceed {:?}",
            minimal_c_theta
        )));
    }
    Ok(PotentialReport {
        theta,
        min_value,
        minimal_c_theta,
    })
}

/// Outcome of the mobility/potential compatibility check.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PairReport {
    pub pass: bool,
    pub n: Option<f64>,
    pub theta: f64,
    /// `max{2, 6 - 2n}`; θ must exceed it.
    pub theta_threshold: Option<f64>,
    /// `inf_{r ≤ 1} φ'' r^{θ+2}` (lower sandwich constant).
    pub lower_const: f64,
    /// Smallest `c₀` with `L r^{-θ-2} - c₀ ≤ φ''` on the probe grid.
    pub c0: f64,
    /// `sup φ'' r^{θ+2}` (upper sandwich constant).
    pub upper_const: f64,
    /// `inf φ r^θ` (constant in `r^{-θ} ≲ φ`).
    pub potential_lower_const: f64,
    pub messages: Vec<String>,
}

/// Never fails: problems are recorded in the report.
pub fn validate_pair(mob: &MobilitySpec, pot: &PotentialSpec) -> PairReport {
    let theta = pot.theta();
    let mut messages = Vec::new();
    let mut pass = true;
    let n = match validate_mobility(mob) {
        Ok(r) => Some(r.n),
        Err(e) => {
            messages.push(format!("{e}"));
            pass = false;
            None
        }
    };
    if let Err(e) = validate_potential(pot) {
        messages.push(format!("{e}"));
        pass = false;
    }
    let threshold = n.map(|n| 2.0f64.max(6.0 - 2.0 * n));
    if let Some(th) = threshold {
        if !(theta > th) {
            pass = false;
            messages.push(format!("theta = {theta} must exceed max(2, 6 - 2n) = {th}"));
        }
    }

    let probe = probe_grid();
    let mut lower_const = f64::INFINITY;
    let mut upper_const = 0.0f64;
    let mut potential_lower_const = f64::INFINITY;
    for &r in &probe {
        let j = pot.eval_unchecked(r);
        let scaled = j.d2 * r.powf(theta + 2.0);
        upper_const = upper_const.max(scaled);
        if r <= 1.0 {
            lower_const = lower_const.min(scaled);
        }
        potential_lower_const = potential_lower_const.min(j.value * r.powf(theta));
    }
    let c0 = probe
        .iter()
        .map(|&r| lower_const * r.powf(-theta - 2.0) - pot.eval_unchecked(r).d2)
        .fold(0.0f64, f64::max);
    if !(lower_const > 0.0) || !upper_const.is_finite() {
        pass = false;
        messages.push(format!(
            "phi'' sandwich fails: lower {lower_const:e}, upper {upper_const:e}"
        ));
    }
    if !(potential_lower_const > 0.0) {
        pass = false;
        messages.push("r^-theta <~ phi fails on the probe grid".into());
    }
    PairReport {
        pass,
        n,
        theta,
        theta_threshold: threshold,
        lower_const,
        c0,
        upper_const,
        potential_lower_const,
        messages,
    }
}

/// `g = √m`, `g'`, `Φ = m φ''` and the Stratonovich-effective `Φ_strat`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derived {
    pub g: f64,
    pub dg: f64,
    pub phi: f64,
    pub phi_strat: f64,
}

/// Coefficients derived from `(m, φ)` at `r`. With no potential `Φ = 0`.
/// `intensity` is the constant `C = Σ ψ_k²`; the Stratonovich shift is
/// `(C/8)(m')²/m`.
pub fn derived_coefficients(
    mob: &MobilitySpec,
    pot: Option<&PotentialSpec>,
    r: f64,
    intensity: f64,
) -> Result<Derived> {
    check_positive(r)?;
    if !(intensity >= 0.0) {
        return Err(Error::OutOfRange(format!(
            "noise intensity must be >= 0, got {intensity}"
        )));
    }
    Ok(derived_unchecked(mob, pot, r, intensity))
}

pub(crate) fn derived_unchecked(
    mob: &MobilitySpec,
    pot: Option<&PotentialSpec>,
    r: f64,
    intensity: f64,
) -> Derived {
    let m = mob.eval_unchecked(r);
    let g = m.value.sqrt();
    let dg = m.d1 / (2.0 * g);
    let phi = match pot {
        Some(p) => m.value * p.eval_unchecked(r).d2,
        None => 0.0,
    };
    let phi_strat = phi + stratonovich_shift(&m, intensity);
    Derived {
        g,
        dg,
        phi,
        phi_strat,
    }
}

pub(crate) fn stratonovich_shift(m: &Jet, intensity: f64) -> f64 {
    (intensity / 8.0) * m.d1 * m.d1 / m.value
}

/// Smooth cutoff level `j ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct CutoffSpec {
    pub j: u32,
}

impl CutoffSpec {
    pub fn new(j: u32) -> Result<Self> {
        if j == 0 {
            return Err(Error::OutOfRange("cutoff level j must be >= 1".into()));
        }
        Ok(Self { j })
    }

    /// `η_j(r) = η(j r)`.
    pub fn eta(&self, r: f64) -> f64 {
        eta(self.j as f64 * r)
    }
}

fn bump(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 on `s ≤ 1`, 1 on `s ≥ 2`, `C^∞` and nondecreasing.
pub fn eta(s: f64) -> f64 {
    let a = bump(s - 1.0);
    if a == 0.0 {
        return 0.0;
    }
    let b = bump(2.0 - s);
    a / (a + b)
}

/// Regularized `(m_j, Φ_j, g_j)`, defined for every real `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularized {
    pub m: f64,
    pub phi: f64,
    pub g: f64,
}

/// `m_j = η_j m + (1 - η_j)`, `Φ_j = η_j Φ`, `g_j = η_j g`; `intensity`
/// feeds the Stratonovich shift of `Φ` (pass 0 for Itô).
pub fn regularize(
    mob: &MobilitySpec,
    pot: Option<&PotentialSpec>,
    cut: CutoffSpec,
    r: f64,
    intensity: f64,
) -> Regularized {
    let e = cut.eta(r);
    if e == 0.0 {
        return Regularized {
            m: 1.0,
            phi: 0.0,
            g: 0.0,
        };
    }
    let m = mob.eval_unchecked(r).value;
    let d = derived_unchecked(mob, pot, r, intensity);
    let phi = if intensity > 0.0 { d.phi_strat } else { d.phi };
    Regularized {
        m: e * m + (1.0 - e),
        phi: e * phi,
        g: e * d.g,
    }
}
