//! Exact-mode bench for `∂_t u + a(t) Δ²u = f`, `u(0) = u₀`, on the unit
//! torus with piecewise-constant `a ∈ [1/λ, λ]`.
//!
//! Each Fourier mode solves `û' = -a(t) μ_k û + f̂_k(t)` with
//! `μ_k = (2πk)⁴`; on a piece of constant `a` and `f̂` the solution is
//!
//! ```text
//! û(s) = e^{-aμs} û(0) + f̂ (1 - e^{-aμs}) / (aμ)
//! ```
//!
//! so the only error in the measured norms comes from the time and space
//! quadratures. Real fields are stored by their coefficients for `k ≥ 0`;
//! negative modes are the conjugates.

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::lq_norm;
use crate::quadrature::GaussLegendre;
use crate::stats::Summary;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

/// `(2πk)⁴`.
pub fn mu(k: usize) -> f64 {
    (2.0 * PI * k as f64).powi(4)
}

/// `(1 - e^{-x}) / x`, continuous at 0.
fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-300 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Piecewise-constant coefficient: `values[i]` on `[switch_times[i], switch_times[i+1])`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoefficientPath {
    pub switch_times: Vec<f64>,
    pub values: Vec<f64>,
    pub lambda: f64,
}

impl CoefficientPath {
    pub fn new(switch_times: Vec<f64>, values: Vec<f64>, lambda: f64) -> Result<Self> {
        if !(lambda >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda = {lambda} must be >= 1"
            )));
        }
        if switch_times.is_empty() || switch_times[0] != 0.0 || switch_times.len() != values.len() {
            return Err(Error::InvalidConfig(
                "switch times must start at 0 and match the values".into(),
            ));
        }
        if switch_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig(
                "switch times must be strictly increasing".into(),
            ));
        }
        let tol = 1e-12 * lambda;
        if let Some(v) = values
            .iter()
            .find(|&&v| !(v >= 1.0 / lambda - tol && v <= lambda + tol))
        {
            return Err(Error::InvalidConfig(format!(
                "coefficient {v} outside [1/lambda, lambda]"
            )));
        }
        Ok(Self {
            switch_times,
            values,
            lambda,
        })
    }

    pub fn constant(a: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![a], a.max(1.0 / a))
    }

    /// `values.len()` equal pieces of `[0, T]`.
    pub fn equal_pieces(values: Vec<f64>, t_final: f64, lambda: f64) -> Result<Self> {
        let p = values.len();
        let times = (0..p).map(|i| t_final * i as f64 / p as f64).collect();
        Self::new(times, values, lambda)
    }

    fn piece(&self, t: f64) -> usize {
        self.switch_times
            .partition_point(|&s| s <= t)
            .saturating_sub(1)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.piece(t)]
    }
}

/// Piecewise-constant forcing: `amps[i][k]` is `f̂_k` on piece `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSpec {
    pub switch_times: Vec<f64>,
    pub amps: Vec<Vec<Complex64>>,
    pub k_modes: usize,
}

impl ForcingSpec {
    pub fn zero(k_modes: usize) -> Self {
        Self {
            switch_times: vec![0.0],
            amps: vec![vec![Complex64::new(0.0, 0.0); k_modes + 1]],
            k_modes,
        }
    }

    pub fn new(switch_times: Vec<f64>, amps: Vec<Vec<Complex64>>, k_modes: usize) -> Result<Self> {
        if switch_times.len() != amps.len() || amps.iter().any(|a| a.len() != k_modes + 1) {
            return Err(Error::InvalidConfig(
                "forcing amplitudes do not match switch grid or mode count".into(),
            ));
        }
        if amps.iter().any(|a| a[0].im != 0.0) {
            return Err(Error::InvalidConfig(
                "the zero mode of a real forcing must be real".into(),
            ));
        }
        Ok(Self {
            switch_times,
            amps,
            k_modes,
        })
    }

    /// Scaled copy.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            amps: self
                .amps
                .iter()
                .map(|a| a.iter().map(|z| z * c).collect())
                .collect(),
            ..self.clone()
        }
    }
}

/// Exact solution on `[0, T]`: states at every joint switch time.
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub t_final: f64,
    pub k_modes: usize,
    /// Union of coefficient and forcing switch times (plus 0).
    breaks: Vec<f64>,
    a: Vec<f64>,
    f: Vec<Vec<Complex64>>,
    states: Vec<Vec<Complex64>>,
}

impl ExactSolution {
    pub fn new(
        a: &CoefficientPath,
        f: &ForcingSpec,
        u0: &[Complex64],
        t_final: f64,
    ) -> Result<Self> {
        let k_modes = f.k_modes;
        if u0.len() != k_modes + 1 {
            return Err(Error::InvalidConfig(
                "initial coefficients do not match the mode count".into(),
            ));
        }
        if f.switch_times.first() != Some(&0.0) || f.switch_times.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::InvalidConfig(
                "forcing switch times must start at 0 and increase".into(),
            ));
        }
        if !(t_final > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "T = {t_final} must be positive"
            )));
        }
        let mut breaks: Vec<f64> = a
            .switch_times
            .iter()
            .chain(&f.switch_times)
            .copied()
            .filter(|&t| t < t_final)
            .collect();
        breaks.sort_by(|x, y| x.partial_cmp(y).expect("finite switch times"));
        breaks.dedup();
        let fpiece = |t: f64| {
            f.switch_times
                .partition_point(|&s| s <= t)
                .saturating_sub(1)
        };
        let av: Vec<f64> = breaks.iter().map(|&t| a.value_at(t)).collect();
        let fv: Vec<Vec<Complex64>> = breaks.iter().map(|&t| f.amps[fpiece(t)].clone()).collect();
        let mut states = Vec::with_capacity(breaks.len() + 1);
        states.push(u0.to_vec());
        for i in 0..breaks.len() {
            let end = breaks.get(i + 1).copied().unwrap_or(t_final);
            let next = propagate(&states[i], av[i], &fv[i], end - breaks[i]);
            states.push(next);
        }
        Ok(Self {
            t_final,
            k_modes,
            breaks,
            a: av,
            f: fv,
            states,
        })
    }

    fn piece(&self, t: f64) -> usize {
        self.breaks.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// `a(t)` and `f̂(t)` (right-continuous).
    pub fn data_at(&self, t: f64) -> (f64, &[Complex64]) {
        let i = self.piece(t);
        (self.a[i], &self.f[i])
    }

    pub fn u_hat(&self, t: f64) -> Vec<Complex64> {
        if t >= self.t_final {
            return self.states[self.breaks.len()].clone();
        }
        let i = self.piece(t);
        propagate(&self.states[i], self.a[i], &self.f[i], t - self.breaks[i])
    }

    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.breaks.len()).map(move |i| {
            (
                self.breaks[i],
                self.breaks.get(i + 1).copied().unwrap_or(self.t_final),
            )
        })
    }
}

fn propagate(u: &[Complex64], a: f64, f: &[Complex64], s: f64) -> Vec<Complex64> {
    u.iter()
        .zip(f)
        .enumerate()
        .map(|(k, (&u0, &fk))| {
            let lam = a * mu(k);
            u0 * (-lam * s).exp() + fk * (s * phi1(lam * s))
        })
        .collect()
}

/// Mode coefficients sampled at the midpoints of `n_t` equal cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrajectory {
    pub times: Vec<f64>,
    pub dt: f64,
    pub u: Vec<Vec<Complex64>>,
    /// `a(t) μ_k û_k`.
    pub bilap: Vec<Vec<Complex64>>,
    /// `f̂_k(t) - a(t) μ_k û_k`.
    pub u_t: Vec<Vec<Complex64>>,
    pub f: Vec<Vec<Complex64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Component {
    U,
    UT,
    Bilap,
    F,
}

impl ModeTrajectory {
    fn component(&self, c: Component) -> &[Vec<Complex64>] {
        match c {
            Component::U => &self.u,
            Component::UT => &self.u_t,
            Component::Bilap => &self.bilap,
            Component::F => &self.f,
        }
    }
}

/// Zero-data solution (`u₀ = 0`) sampled on `n_t` cells. Every switch time
/// must be a cell boundary.
pub fn solve_exact(
    a: &CoefficientPath,
    f: &ForcingSpec,
    t_final: f64,
    n_t: usize,
) -> Result<ModeTrajectory> {
    if n_t == 0 {
        return Err(Error::InvalidConfig("need at least one time cell".into()));
    }
    for &s in a.switch_times.iter().chain(&f.switch_times) {
        let pos = s / t_final * n_t as f64;
        if (pos - pos.round()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "switch time {s} is not on the {n_t}-cell sample grid"
            )));
        }
    }
    let sol = ExactSolution::new(
        a,
        f,
        &vec![Complex64::new(0.0, 0.0); f.k_modes + 1],
        t_final,
    )?;
    Ok(sample(&sol, n_t))
}

/// Samples of an exact solution at cell midpoints.
pub fn sample(sol: &ExactSolution, n_t: usize) -> ModeTrajectory {
    let dt = sol.t_final / n_t as f64;
    let times: Vec<f64> = (0..n_t).map(|j| (j as f64 + 0.5) * dt).collect();
    let mut traj = ModeTrajectory {
        times: times.clone(),
        dt,
        u: vec![],
        bilap: vec![],
        u_t: vec![],
        f: vec![],
    };
    for &t in &times {
        let u = sol.u_hat(t);
        let (a, f) = sol.data_at(t);
        let bilap: Vec<Complex64> = u.iter().enumerate().map(|(k, z)| z * (a * mu(k))).collect();
        let ut: Vec<Complex64> = f.iter().zip(&bilap).map(|(x, y)| x - y).collect();
        traj.u.push(u);
        traj.bilap.push(bilap);
        traj.u_t.push(ut);
        traj.f.push(f.to_vec());
    }
    traj
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeightSpec {
    pub kappa: f64,
    pub p: f64,
    pub q: f64,
}

impl WeightSpec {
    pub fn new(kappa: f64, p: f64, q: f64) -> Result<Self> {
        if !(p > 2.0) {
            return Err(Error::InvalidConfig(format!("p = {p} must exceed 2")));
        }
        if !(q >= 2.0) {
            return Err(Error::InvalidConfig(format!("q = {q} must be >= 2")));
        }
        if !(kappa >= 0.0 && kappa < p / 2.0 - 1.0) {
            return Err(Error::InvalidConfig(format!(
                "kappa = {kappa} outside [0, p/2 - 1) = [0, {})",
                p / 2.0 - 1.0
            )));
        }
        Ok(Self { kappa, p, q })
    }

    /// Same exponents without the range checks (for norms outside the
    /// Muckenhoupt range, e.g. `p = 2`).
    pub fn unchecked(kappa: f64, p: f64, q: f64) -> Self {
        Self { kappa, p, q }
    }
}

/// Real grid values of `Σ_k c_k e^{2πikx}` (conjugate-symmetric extension).
pub fn reconstruct(coeffs: &[Complex64], n_x: usize) -> Vec<f64> {
    let mut spec = vec![Complex64::new(0.0, 0.0); n_x];
    for (k, &c) in coeffs.iter().enumerate() {
        assert!(2 * k < n_x, "grid too coarse for the mode count");
        if k == 0 {
            spec[0] = Complex64::new(c.re, 0.0);
        } else {
            spec[k] = c;
            spec[n_x - k] = c.conj();
        }
    }
    fft::inverse_real(&spec)
}

/// Spatial grid used for reconstruction: a power of two with at least
/// `4(K+1)` points.
pub fn reconstruction_points(k_modes: usize) -> usize {
    (4 * (k_modes + 1)).next_power_of_two()
}

/// `(Σ_j Δt t_j^κ ‖c(t_j)‖_{L^q}^p)^{1/p}` over the midpoint samples.
pub fn weighted_norm(traj: &ModeTrajectory, w: WeightSpec, component: Component) -> Result<f64> {
    let data = traj.component(component);
    let Some(first) = data.first() else {
        return Ok(0.0);
    };
    let n_x = reconstruction_points(first.len().saturating_sub(1));
    let mut sum = 0.0;
    for (t, c) in traj.times.iter().zip(data) {
        let norm = lq_norm(&reconstruct(c, n_x), w.q)?;
        sum += traj.dt * t.powf(w.kappa) * norm.powf(w.p);
    }
    Ok(sum.powf(1.0 / w.p))
}

/// `(‖∂_t u‖ + ‖a Δ²u‖) / ‖f‖` in the weighted norm.
pub fn mr_ratio(traj: &ModeTrajectory, w: WeightSpec) -> Result<f64> {
    let ut = weighted_norm(traj, w, Component::UT)?;
    let bl = weighted_norm(traj, w, Component::Bilap)?;
    let f = weighted_norm(traj, w, Component::F)?;
    Ok((ut + bl) / f)
}

fn trial_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..32].copy_from_slice(b"maxreg01");
    ChaCha8Rng::from_seed(key)
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Band-limited forcing on `pieces` equal intervals: mean-free,
/// `f̂_k ~ (N + iN)/k` for `k = 1..=K`.
pub fn random_forcing(
    seed: u64,
    t_final: f64,
    k_modes: usize,
    pieces: usize,
) -> Result<ForcingSpec> {
    let mut rng = trial_rng(seed, 1, 0);
    let times: Vec<f64> = (0..pieces)
        .map(|i| t_final * i as f64 / pieces as f64)
        .collect();
    let amps = (0..pieces)
        .map(|_| {
            (0..=k_modes)
                .map(|k| {
                    if k == 0 {
                        return Complex64::new(0.0, 0.0);
                    }
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im) / k as f64
                })
                .collect()
        })
        .collect();
    ForcingSpec::new(times, amps, k_modes)
}

/// I.i.d. uniform values in `[1/λ, λ]` on `pieces` equal intervals. The
/// underlying uniforms depend only on `(seed, trial)`, so paths for
/// different `λ` are paired.
pub fn random_path(
    seed: u64,
    trial: u64,
    lambda: f64,
    t_final: f64,
    pieces: usize,
) -> Result<CoefficientPath> {
    let mut rng = trial_rng(seed, 2, trial);
    let lo = 1.0 / lambda;
    let values = (0..pieces)
        .map(|_| lo + (lambda - lo) * unit(&mut rng))
        .collect();
    CoefficientPath::equal_pieces(values, t_final, lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MrSetup {
    pub lambda: f64,
    pub trials: usize,
    pub weight: WeightSpec,
    pub t_final: f64,
    pub k_modes: usize,
    pub pieces: usize,
    pub n_t: usize,
    pub seed: u64,
}

/// Ratio for one trial at `n_t` cells.
pub fn mr_trial(setup: &MrSetup, forcing: &ForcingSpec, trial: u64, n_t: usize) -> Result<f64> {
    let path = random_path(setup.seed, trial, setup.lambda, setup.t_final, setup.pieces)?;
    let traj = solve_exact(&path, forcing, setup.t_final, n_t)?;
    mr_ratio(&traj, setup.weight)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MrStats {
    pub ratios: Vec<f64>,
    pub summary: Summary,
    pub spread: f64,
    /// Spread with `2 n_t` cells.
    pub refined_spread: f64,
    /// `|refined/spread - 1|`.
    pub refinement_change: f64,
    /// Largest per-trial relative change under `n_t` doubling.
    pub max_ratio_change: f64,
}

/// Combine per-trial ratios at `n_t` and `2 n_t`.
pub fn mr_stats(ratios: Vec<f64>, refined: &[f64]) -> Result<MrStats> {
    let summary = Summary::of(&ratios)
        .ok_or_else(|| Error::InvalidConfig("need at least one trial".into()))?;
    let fine = Summary::of(refined)
        .ok_or_else(|| Error::InvalidConfig("need at least one trial".into()))?;
    let spread = summary.spread();
    let refined_spread = fine.spread();
    let max_ratio_change = ratios
        .iter()
        .zip(refined)
        .fold(0.0f64, |m, (a, b)| m.max((b / a - 1.0).abs()));
    Ok(MrStats {
        summary,
        spread,
        refined_spread,
        refinement_change: (refined_spread / spread - 1.0).abs(),
        max_ratio_change,
        ratios,
    })
}

/// Sequential experiment: one fixed random forcing, `trials` random
/// coefficient paths.
pub fn mr_ratio_experiment(setup: &MrSetup) -> Result<MrStats> {
    if setup.trials == 0 || setup.pieces == 0 || !setup.n_t.is_multiple_of(setup.pieces) {
        return Err(Error::InvalidConfig(
            "need trials >= 1 and pieces dividing n_t".into(),
        ));
    }
    let forcing = random_forcing(setup.seed, setup.t_final, setup.k_modes, setup.pieces)?;
    let mut coarse = Vec::with_capacity(setup.trials);
    let mut fine = Vec::with_capacity(setup.trials);
    for trial in 0..setup.trials as u64 {
        coarse.push(mr_trial(setup, &forcing, trial, setup.n_t)?);
        fine.push(mr_trial(setup, &forcing, trial, 2 * setup.n_t)?);
    }
    mr_stats(coarse, &fine)
}

/// `½‖u(T)‖²`, `∫ a ‖Δu‖² dt` and `∫ ⟨f, u⟩ dt` by Parseval per mode,
/// with the time integrals in closed form on each piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBalance {
    pub half_final: f64,
    pub dissipation: f64,
    pub work: f64,
    pub half_initial: f64,
}

fn parseval(c: &[Complex64], weight: impl Fn(usize) -> f64) -> f64 {
    c.iter()
        .enumerate()
        .map(|(k, z)| if k == 0 { 1.0 } else { 2.0 } * weight(k) * z.norm_sqr())
        .sum()
}

pub fn energy_balance(sol: &ExactSolution) -> EnergyBalance {
    let mut dissipation = 0.0;
    let mut work = 0.0;
    for (i, (t0, t1)) in sol.pieces().enumerate() {
        let tau = t1 - t0;
        let a = sol.a[i];
        for (k, (&u0, &f)) in sol.states[i].iter().zip(&sol.f[i]).enumerate() {
            let mult = if k == 0 { 1.0 } else { 2.0 };
            let lam = a * mu(k);
            if lam == 0.0 {
                // û = u0 + f s
                work += mult * ((u0.conj() * f).re * tau + f.norm_sqr() * tau * tau / 2.0);
                continue;
            }
            // û = A e^{-λs} + B
            let b = f / lam;
            let big_a = u0 - b;
            let e1 = tau * phi1(lam * tau);
            let e2 = tau * phi1(2.0 * lam * tau);
            let sq = big_a.norm_sqr() * e2 + 2.0 * (big_a * b.conj()).re * e1 + b.norm_sqr() * tau;
            dissipation += mult * lam * sq;
            work += mult * ((big_a.conj() * f).re * e1 + (b.conj() * f).re * tau);
        }
    }
    EnergyBalance {
        half_final: 0.5 * parseval(&sol.u_hat(sol.t_final), |_| 1.0),
        dissipation,
        work,
        half_initial: 0.5 * parseval(&sol.states[0], |_| 1.0),
    }
}

/// Dyadic-interval Muckenhoupt constant of `w(t) = t^κ` in `A_r` on `[0,1]`:
/// `sup_I (⨍_I w)(⨍_I w^{-1/(r-1)})^{r-1}`, with both averages taken by the
/// midpoint rule on `2^depth` cells.
pub fn muckenhoupt_constant(kappa: f64, r: f64, depth: u32) -> Result<f64> {
    if !(r > 1.0) {
        return Err(Error::InvalidConfig(format!("A_r needs r > 1, got {r}")));
    }
    let n = 1usize << depth;
    let h = 1.0 / n as f64;
    let e = -1.0 / (r - 1.0);
    // prefix sums over cells
    let mut pw = vec![0.0; n + 1];
    let mut pd = vec![0.0; n + 1];
    for i in 0..n {
        let t = (i as f64 + 0.5) * h;
        pw[i + 1] = pw[i] + t.powf(kappa);
        pd[i + 1] = pd[i] + t.powf(kappa * e);
    }
    let mut best = 0.0f64;
    for level in 0..=depth {
        let len = n >> level;
        for j in 0..(1usize << level) {
            let (lo, hi) = (j * len, (j + 1) * len);
            let aw = (pw[hi] - pw[lo]) / len as f64;
            let ad = (pd[hi] - pd[lo]) / len as f64;
            best = best.max(aw * ad.powf(r - 1.0));
        }
    }
    Ok(best)
}

/// Parabolic cube `(t - r, t + r) × (x - r^{1/4}, x + r^{1/4})`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Cube {
    pub t: f64,
    pub x: f64,
    pub r: f64,
}

impl Cube {
    pub fn space_radius(&self) -> f64 {
        self.r.powf(0.25)
    }

    pub fn doubled(&self) -> Cube {
        Cube {
            r: 2.0 * self.r,
            ..*self
        }
    }
}

/// Value of the real field `Σ_k û_k(t) e^{2πikx}` (conjugate extension).
fn field_value(u: &[Complex64], x: f64) -> f64 {
    u.iter()
        .enumerate()
        .map(|(k, z)| {
            if k == 0 {
                z.re
            } else {
                let w = 2.0 * PI * k as f64 * x;
                2.0 * (z.re * w.cos() - z.im * w.sin())
            }
        })
        .sum()
}

/// Number of sample points per axis for the supremum over `Q`.
pub const SUP_SAMPLES: usize = 33;
/// Gauss–Legendre order per axis for the mean over `2Q`.
pub const MEAN_ORDER: usize = 32;

/// `sup_Q |u| / (⨍_{2Q} u²)^{1/2}` where `2Q` doubles both radii, i.e.
/// `(t - 2r, t + 2r) × (x - 2r^{1/4}, x + 2r^{1/4})`.
pub fn caccioppoli_ratio(sol: &ExactSolution, cube: Cube) -> Result<f64> {
    let rs = cube.space_radius();
    if cube.t - 2.0 * cube.r < cube.r || cube.t + 2.0 * cube.r > sol.t_final || 2.0 * rs >= 0.5 {
        return Err(Error::OutOfRange(format!(
            "cube {cube:?} does not fit inside (r, T) x torus"
        )));
    }
    let m = SUP_SAMPLES - 1;
    let mut sup = 0.0f64;
    for i in 0..=m {
        let t = cube.t - cube.r + 2.0 * cube.r * i as f64 / m as f64;
        let u = sol.u_hat(t);
        for j in 0..=m {
            let x = cube.x - rs + 2.0 * rs * j as f64 / m as f64;
            sup = sup.max(field_value(&u, x).abs());
        }
    }
    if sup == 0.0 {
        return Ok(f64::NAN);
    }
    let gl = GaussLegendre::new(MEAN_ORDER);
    let (t0, t1) = (cube.t - 2.0 * cube.r, cube.t + 2.0 * cube.r);
    let (x0, x1) = (cube.x - 2.0 * rs, cube.x + 2.0 * rs);
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for (t, wt) in gl.mapped(t0, t1) {
        let u = sol.u_hat(t);
        for (x, wx) in gl.mapped(x0, x1) {
            // normalized by the sup so a constant field gives exactly 1
            let v = field_value(&u, x) / sup;
            acc += wt * wx * v * v;
            wsum += wt * wx;
        }
    }
    Ok(1.0 / (acc / wsum).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CaccioppoliSetup {
    pub lambda: f64,
    pub trials: usize,
    pub k_modes: usize,
    pub pieces: usize,
    pub cubes_per_scale: usize,
    pub seed: u64,
}

/// Horizon long enough for every cube at scale `r_max`: `T = 8 r_max`.
pub fn caccioppoli_horizon(scales: &[f64]) -> f64 {
    8.0 * scales.iter().copied().fold(0.0, f64::max)
}

/// Rough mean-free data `û_k(0) ~ (N + iN)/√2` for `k = 1..=K`.
pub fn rough_data(seed: u64, trial: u64, k_modes: usize) -> Vec<Complex64> {
    let mut rng = trial_rng(seed, 3, trial);
    (0..=k_modes)
        .map(|k| {
            if k == 0 {
                return Complex64::new(0.0, 0.0);
            }
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
        })
        .collect()
}

/// Largest ratio over the cubes of one trial, one entry per scale. Cube
/// centres are uniform in `[3r, 6r] × [0, 1)`.
pub fn caccioppoli_trial(setup: &CaccioppoliSetup, scales: &[f64], trial: u64) -> Result<Vec<f64>> {
    let t_final = caccioppoli_horizon(scales);
    let path = random_path(setup.seed, trial, setup.lambda, t_final, setup.pieces)?;
    let data = rough_data(setup.seed, trial, setup.k_modes);
    let sol = ExactSolution::new(&path, &ForcingSpec::zero(setup.k_modes), &data, t_final)?;
    let mut rng = trial_rng(setup.seed, 4, trial);
    scales
        .iter()
        .map(|&r| {
            let mut best = 0.0f64;
            for _ in 0..setup.cubes_per_scale {
                let cube = Cube {
                    t: r * (3.0 + 3.0 * unit(&mut rng)),
                    x: unit(&mut rng),
                    r,
                };
                best = best.max(caccioppoli_ratio(&sol, cube)?);
            }
            Ok(best)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CaccioppoliStats {
    pub scales: Vec<f64>,
    /// Maximum over trials and cubes, per scale.
    pub max_ratio: Vec<f64>,
    /// `max / min` of `max_ratio` across scales.
    pub scale_spread: f64,
    pub per_trial: Vec<Vec<f64>>,
}

pub fn caccioppoli_stats(scales: &[f64], per_trial: Vec<Vec<f64>>) -> CaccioppoliStats {
    let max_ratio: Vec<f64> = (0..scales.len())
        .map(|s| per_trial.iter().map(|t| t[s]).fold(0.0, f64::max))
        .collect();
    let scale_spread = Summary::of(&max_ratio).map_or(f64::NAN, |s| s.spread());
    CaccioppoliStats {
        scales: scales.to_vec(),
        max_ratio,
        scale_spread,
        per_trial,
    }
}

pub fn caccioppoli_experiment(
    setup: &CaccioppoliSetup,
    scales: &[f64],
) -> Result<CaccioppoliStats> {
    let per_trial = (0..setup.trials as u64)
        .map(|t| caccioppoli_trial(setup, scales, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(caccioppoli_stats(scales, per_trial))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Classical RK4 on `û' = -a μ û + f̂` with `steps` steps per piece.
    fn rk4(
        path: &CoefficientPath,
        f: &ForcingSpec,
        k: usize,
        t_final: f64,
        steps: usize,
    ) -> Complex64 {
        let mut breaks: Vec<f64> = path
            .switch_times
            .iter()
            .chain(&f.switch_times)
            .copied()
            .collect();
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
        breaks.push(t_final);
        let mut u = Complex64::new(0.0, 0.0);
        for w in breaks.windows(2) {
            let a = path.value_at(w[0]);
            let fi = f.switch_times.partition_point(|&s| s <= w[0]) - 1;
            let fk = f.amps[fi][k];
            let rhs = |v: Complex64| fk - v * (a * mu(k));
            let h = (w[1] - w[0]) / steps as f64;
            for _ in 0..steps {
                let k1 = rhs(u);
                let k2 = rhs(u + k1 * (0.5 * h));
                let k3 = rhs(u + k2 * (0.5 * h));
                let k4 = rhs(u + k3 * h);
                u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
        }
        u
    }

    fn single_mode_forcing(k_modes: usize, k: usize, value: Complex64) -> ForcingSpec {
        let mut amps = vec![Complex64::new(0.0, 0.0); k_modes + 1];
        amps[k] = value;
        ForcingSpec::new(vec![0.0], vec![amps], k_modes).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let f = single_mode_forcing(2, 1, Complex64::new(1.0, 0.0));
        let a = CoefficientPath::constant(1.0).unwrap();
        let traj = solve_exact(&a, &f, 0.01, 64).unwrap();
        for (t, u) in traj.times.iter().zip(&traj.u) {
            let exact = (1.0 - (-mu(1) * t).exp()) / mu(1);
            assert!((u[1].re - exact).abs() < 1e-15 && u[1].im == 0.0);
        }
        let zero = solve_exact(&a, &ForcingSpec::zero(3), 1.0, 16).unwrap();
        assert!(zero.u.iter().flatten().all(|z| z.norm() == 0.0));
        let bad = CoefficientPath::new(vec![0.0, 0.3], vec![1.0, 1.0], 1.0).unwrap();
        assert!(solve_exact(&bad, &f, 1.0, 16).is_err());
    }

    #[test]
    fn matches_rk4_oracle() {
        let f = single_mode_forcing(1, 1, Complex64::new(1.0, -0.5));
        let t_final = 0.01;
        let a = CoefficientPath::equal_pieces(vec![2.0, 0.5], t_final, 2.0).unwrap();
        let sol = ExactSolution::new(&a, &f, &[Complex64::new(0.0, 0.0); 2], t_final).unwrap();
        let exact = sol.u_hat(t_final)[1];
        let oracle = rk4(&a, &f, 1, t_final, 20_000);
        assert!(
            (exact - oracle).norm() <= 1e-10 * exact.norm(),
            "{exact} vs {oracle}"
        );
        for seed in 0..5 {
            let t_final = 0.02;
            let path = random_path(seed, 0, 3.0, t_final, 8).unwrap();
            let forcing = random_forcing(seed, t_final, 3, 4).unwrap();
            let sol = ExactSolution::new(&path, &forcing, &[Complex64::new(0.0, 0.0); 4], t_final)
                .unwrap();
            let u = sol.u_hat(t_final);
            for k in 1..=3 {
                let oracle = rk4(&path, &forcing, k, t_final, 40_000);
                assert!(
                    (u[k] - oracle).norm() <= 1e-10 * u[k].norm(),
                    "seed {seed} k {k}"
                );
            }
        }
    }

    #[test]
    fn weighted_norm_examples() {
        // û₁(t) = t ⇒ field 2t cos(2πx)/2 = t cos(2πx), ‖·‖_{L²} = t/√2
        let n_t = 512;
        let dt = 1.0 / n_t as f64;
        let times: Vec<f64> = (0..n_t).map(|j| (j as f64 + 0.5) * dt).collect();
        let coeffs = |c: f64| vec![Complex64::new(0.0, 0.0), Complex64::new(c, 0.0)];
        let u: Vec<_> = times.iter().map(|&t| coeffs(0.5 * t)).collect();
        let traj = ModeTrajectory {
            times: times.clone(),
            dt,
            u: u.clone(),
            bilap: u.clone(),
            u_t: u.clone(),
            f: u,
        };
        let p = 4.0;
        let v = weighted_norm(&traj, WeightSpec::new(0.0, p, 2.0).unwrap(), Component::U).unwrap();
        let exact = (1.0 / (p + 1.0)).powf(1.0 / p) * core::f64::consts::FRAC_1_SQRT_2;
        assert!((v - exact).abs() < 1e-5 * exact);
        // û ≡ const: the weight t^κ integrates to 1/(κ+1)
        let ones: Vec<_> = times.iter().map(|_| coeffs(0.5)).collect();
        let traj = ModeTrajectory {
            times,
            dt,
            u: ones.clone(),
            bilap: ones.clone(),
            u_t: ones.clone(),
            f: ones,
        };
        let k = 0.4;
        let a = weighted_norm(&traj, WeightSpec::unchecked(k, p, 2.0), Component::U).unwrap();
        let b = weighted_norm(&traj, WeightSpec::unchecked(2.0 * k, p, 2.0), Component::U).unwrap();
        let factor = ((1.0 / (2.0 * k + 1.0)) / (1.0 / (k + 1.0))).powf(1.0 / p);
        assert!((b / a - factor).abs() < 1e-5);
        let zero = solve_exact(
            &CoefficientPath::constant(1.0).unwrap(),
            &ForcingSpec::zero(2),
            1.0,
            8,
        )
        .unwrap();
        assert_eq!(
            weighted_norm(&zero, WeightSpec::new(0.0, 4.0, 2.0).unwrap(), Component::U).unwrap(),
            0.0
        );
    }

    #[test]
    fn energy_identity() {
        for seed in 0..4 {
            let t_final = 0.05;
            let path = random_path(seed, 1, 2.0, t_final, 16).unwrap();
            let forcing = random_forcing(seed, t_final, 6, 8).unwrap();
            let sol = ExactSolution::new(&path, &forcing, &[Complex64::new(0.0, 0.0); 7], t_final)
                .unwrap();
            let e = energy_balance(&sol);
            let lhs = e.half_final + e.dissipation;
            assert!(
                (lhs - e.work).abs() <= 1e-9 * e.work.abs(),
                "{lhs} vs {}",
                e.work
            );
        }
        // the closed-form time integrals against composite Gauss-Legendre on
        // a slowly decaying single mode
        let t_final = 0.002;
        let path = CoefficientPath::equal_pieces(vec![0.5, 1.5], t_final, 2.0).unwrap();
        let forcing = single_mode_forcing(1, 1, Complex64::new(0.3, 0.8));
        let u0 = [Complex64::new(0.0, 0.0), Complex64::new(1.0, -0.5)];
        let sol = ExactSolution::new(&path, &forcing, &u0, t_final).unwrap();
        let e = energy_balance(&sol);
        let gl = GaussLegendre::new(16);
        let (mut dis, mut work) = (0.0, 0.0);
        let cells = 64;
        for c in 0..cells {
            let (a0, a1) = (
                t_final * c as f64 / cells as f64,
                t_final * (c + 1) as f64 / cells as f64,
            );
            for (t, w) in gl.mapped(a0, a1) {
                let u = sol.u_hat(t)[1];
                let a = path.value_at(t);
                dis += w * 2.0 * a * mu(1) * u.norm_sqr();
                work += w * 2.0 * (u.conj() * forcing.amps[0][1]).re;
            }
        }
        assert!(
            (dis - e.dissipation).abs() <= 1e-12 * dis,
            "{dis} vs {}",
            e.dissipation
        );
        assert!((work - e.work).abs() <= 1e-12 * work.abs());
        let lhs = e.half_final + e.dissipation;
        assert!((lhs - e.half_initial - e.work).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn weight_spec_range() {
        assert!(WeightSpec::new(0.9, 4.0, 2.0).is_ok());
        assert!(WeightSpec::new(1.0, 4.0, 2.0).is_err());
        assert!(WeightSpec::new(0.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn muckenhoupt_finite_inside_range_and_divergent_outside() {
        let inside: Vec<f64> = [10, 14, 18]
            .iter()
            .map(|&d| muckenhoupt_constant(0.5, 2.0, d).unwrap())
            .collect();
        assert!((inside[2] / inside[0] - 1.0).abs() < 0.05);
        let edge: Vec<f64> = [10, 14, 18]
            .iter()
            .map(|&d| muckenhoupt_constant(1.0, 2.0, d).unwrap())
            .collect();
        assert!(edge[1] > 1.2 * edge[0] && edge[2] > 1.2 * edge[1]);
        assert!((muckenhoupt_constant(0.0, 2.0, 8).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lambda_one_has_unit_spread() {
        let setup = MrSetup {
            lambda: 1.0,
            trials: 5,
            weight: WeightSpec::new(0.0, 4.0, 2.0).unwrap(),
            t_final: 1.0,
            k_modes: 8,
            pieces: 4,
            n_t: 128,
            seed: 3,
        };
        let s = mr_ratio_experiment(&setup).unwrap();
        assert!(s.spread <= 1.0 + 1e-12);
        // linearity: scaling the forcing leaves each ratio unchanged
        let f = random_forcing(3, 1.0, 8, 4).unwrap();
        let a = mr_trial(&setup, &f, 0, 128).unwrap();
        let b = mr_trial(&setup, &f.scaled(7.5), 0, 128).unwrap();
        assert!((a / b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn caccioppoli_closed_form() {
        // û₁ = e^{-aμ₁t}: u = 2 e^{-aμ₁t} cos(2πx)
        let a = 1.5;
        let t_final = 0.01;
        let path = CoefficientPath::constant(a).unwrap();
        let data = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let sol = ExactSolution::new(&path, &ForcingSpec::zero(1), &data, t_final).unwrap();
        let cube = Cube {
            t: 2e-3,
            x: 0.0,
            r: 5e-4,
        };
        let measured = caccioppoli_ratio(&sol, cube).unwrap();
        let l = a * mu(1);
        let rs = cube.space_radius();
        let sup = 2.0 * (-l * (cube.t - cube.r)).exp();
        let (t0, t1) = (cube.t - 2.0 * cube.r, cube.t + 2.0 * cube.r);
        let time_mean = ((-2.0 * l * t0).exp() - (-2.0 * l * t1).exp()) / (2.0 * l) / (t1 - t0);
        let big = 2.0 * rs;
        // ⨍ cos²(2πx) over (-R, R)
        let space_mean = 0.5 + (4.0 * PI * big).sin() / (8.0 * PI * big);
        let exact = sup / (4.0 * time_mean * space_mean).sqrt();
        assert!(
            (measured - exact).abs() <= 1e-8 * exact,
            "{measured} vs {exact}"
        );

        let constant = ExactSolution::new(
            &path,
            &ForcingSpec::zero(1),
            &[Complex64::new(0.7, 0.0), Complex64::new(0.0, 0.0)],
            t_final,
        )
        .unwrap();
        let r = caccioppoli_ratio(&constant, cube).unwrap();
        assert_eq!(r, 1.0);
        assert!(caccioppoli_ratio(
            &sol,
            Cube {
                t: 1e-3,
                x: 0.0,
                r: 5e-4
            }
        )
        .is_err());
    }
}
