//! Semi-implicit Euler–Maruyama stepping for the stochastic thin-film
//! equation
//!
//! ```text
//! du = -(m(u)(u_xx - φ'(u))_x)_x dt + Σ_k (g(u) ψ_k)_x dβ_k
//! ```
//!
//! on the unit torus. One step freezes the fourth-order coefficient at the
//! current state and treats the second-order part `(Φ(u) u_x)_x` explicitly:
//!
//! ```text
//! u^{m+1} = (I + dt L_{a^m})^{-1} ( u^m + dt (Φ_eff(u^m) u^m_x)_x + Σ_k ΔW_k (g(u^m) ψ_k)_x )
//! ```
//!
//! with `L_a v = D_flux(a D_face(Δ_h v))` and arithmetic face averages. All
//! spatial terms are flux differences, so mass is conserved to rounding.
//!
//! Time is tracked in integer ticks. The base step `dt0` is refined by
//! halving on rejection; the Brownian increments of the halves come from the
//! bridge tree in [`crate::rng`], so the driving path never depends on the
//! adaptivity history.

mod study;

pub use study::{
    convergence_report, coupled_path, scheme_comparison_path, spatial_study, ConvergenceReport,
    CoupledPath, SchemeComparisonPath, SpatialReport,
};

use crate::coefficients::{
    regularize, stratonovich_shift, validate_pair, CutoffSpec, MobilitySpec, PotentialSpec,
};
use crate::error::{Error, Result};
use crate::functionals::{gamma_range, Diagnostics, DiagnosticsRow};
use crate::grid::{face_average, face_gradient, flux_divergence, next, prev, Field, TorusGrid};
use crate::linalg::{CyclicPentadiagonal, CyclicSolver};
use crate::noise::{intensity_profile, noise_increment, NoiseBasis};
use crate::rng::{BridgeCache, BrownianTree};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Finest refinement level below a base step.
pub const MAX_LEVEL: u8 = 40;
/// Accepted steps at a level before trying the next coarser one.
pub const RECOVERY_STEPS: u32 = 10;
/// Largest tolerated deviation of `Σψ_k²` from its mean for Stratonovich runs.
pub const INTENSITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scheme {
    Ito,
    Stratonovich,
}

/// Initial film profile.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum InitialCondition {
    Constant {
        value: f64,
    },
    /// `mean + amplitude · sin(2πkx)`.
    Harmonic {
        mean: f64,
        amplitude: f64,
        k: u32,
    },
    /// Grid values; must have length `n`.
    Samples {
        values: Vec<f64>,
    },
}

impl InitialCondition {
    pub fn field(&self, grid: TorusGrid) -> Result<Field> {
        match self {
            InitialCondition::Constant { value } => Field::new(grid, vec![*value; grid.n()]),
            InitialCondition::Harmonic { mean, amplitude, k } => {
                let w = 2.0 * core::f64::consts::PI * *k as f64;
                Field::from_fn(grid, |x| mean + amplitude * (w * x).sin())
            }
            InitialCondition::Samples { values } => Field::new(grid, values.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub dt0: f64,
    pub dt_min: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub mobility: MobilitySpec,
    pub potential: Option<PotentialSpec>,
    pub noise: NoiseBasis,
    pub cutoff: Option<CutoffSpec>,
    pub initial: InitialCondition,
    pub pos_floor: f64,
    pub drop_ratio: f64,
    pub h1_max: f64,
    pub output_stride: usize,
    pub seed: u64,
    pub paths: usize,
    pub beta_diag: f64,
    pub gamma_diag: f64,
    /// Intensity `C` of an explicit Stratonovich-type shift applied to `Φ`
    /// in an Itô run; 0 for the plain Itô equation.
    pub ito_correction: f64,
}

impl SimConfig {
    /// `m = u²`, Lennard-Jones `ϑ = 8, c = 1`, four noise frequencies with
    /// `σ_k = k^{-3}`, `c = 0.5`, `u₀ = 1 + 0.3 sin(2πx)` on 128 points.
    pub fn prototype() -> Self {
        let mobility = MobilitySpec::power_law(2.0);
        let beta = Diagnostics::default_beta(&mobility);
        let (lo, hi) = gamma_range(beta).expect("default beta is admissible");
        Self {
            n: 128,
            dt0: 1e-5,
            dt_min: 1e-14,
            t_final: 0.05,
            scheme: Scheme::Ito,
            mobility,
            potential: Some(PotentialSpec::lennard_jones(8.0, 1.0)),
            noise: crate::noise::build_trig_basis(4, 3.0, 0.5).expect("valid basis"),
            cutoff: None,
            initial: InitialCondition::Harmonic {
                mean: 1.0,
                amplitude: 0.3,
                k: 1,
            },
            pos_floor: 1e-7,
            drop_ratio: 0.5,
            h1_max: 1e6,
            output_stride: 100,
            seed: 0,
            paths: 1,
            beta_diag: beta,
            gamma_diag: 0.5 * (lo + hi),
            ito_correction: 0.0,
        }
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.n)
    }

    /// Structural checks; coefficient admissibility is reported separately
    /// by `validate_pair` and is not enforced here.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad(format!("T = {} must be finite and >= 0", self.t_final));
        }
        if !(self.dt0 > 0.0 && self.dt0.is_finite()) {
            return bad(format!("dt0 = {} must be positive", self.dt0));
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt0) {
            return bad(format!(
                "dt_min = {} must lie in (0, dt0 = {})",
                self.dt_min, self.dt0
            ));
        }
        if !(self.pos_floor > 0.0) {
            return bad(format!("pos_floor = {} must be positive", self.pos_floor));
        }
        if !(self.drop_ratio > 0.0 && self.drop_ratio < 1.0) {
            return bad(format!(
                "drop ratio = {} must lie in (0, 1)",
                self.drop_ratio
            ));
        }
        if !(self.h1_max > 0.0) {
            return bad(format!("h1_max = {} must be positive", self.h1_max));
        }
        if self.output_stride == 0 {
            return bad("output_stride must be >= 1".into());
        }
        if self.paths == 0 {
            return bad("paths must be >= 1".into());
        }
        if !(self.ito_correction >= 0.0) {
            return bad(format!(
                "ito_correction = {} must be >= 0",
                self.ito_correction
            ));
        }
        let (lo, hi) = gamma_range(self.beta_diag)?;
        if !(self.gamma_diag >= lo && self.gamma_diag <= hi) {
            return bad(format!(
                "gamma_diag = {} outside [{lo}, {hi}]",
                self.gamma_diag
            ));
        }
        if self.scheme == Scheme::Stratonovich {
            let (_, dev) = intensity_profile(&self.noise, grid);
            if dev > INTENSITY_TOL {
                return Err(Error::InvalidNoise(format!(
                    "Stratonovich scheme needs constant noise intensity; sum psi_k^2 deviates by {dev:e}"
                )));
            }
        }
        let u0 = self.initial.field(grid)?;
        if self.cutoff.is_none() && !(u0.min() > self.pos_floor) {
            return bad(format!(
                "initial minimum {} is not above pos_floor {}",
                u0.min(),
                self.pos_floor
            ));
        }
        if let Some(p) = &self.potential {
            // structural only: the report itself is surfaced by `validate`
            let _ = validate_pair(&self.mobility, p);
        }
        Ok(())
    }
}

/// Configuration with everything precomputed that a step needs.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: SimConfig,
    pub grid: TorusGrid,
    samples: Vec<Vec<f64>>,
    /// Grid mean of `Σψ_k²`.
    pub intensity: f64,
    /// Intensity entering the `Φ` shift `(C/8)(m')²/m`.
    pub phi_shift: f64,
    plan: crate::fft::Plan,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Local {
    m: f64,
    phi: f64,
    g: f64,
}

impl Model {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let (intensity, _) = intensity_profile(&cfg.noise, grid);
        let phi_shift = match cfg.scheme {
            Scheme::Ito => cfg.ito_correction,
            Scheme::Stratonovich => intensity,
        };
        Ok(Self {
            cfg: cfg.clone(),
            grid,
            samples: cfg.noise.sample(grid),
            intensity,
            phi_shift,
            plan: crate::fft::Plan::new(grid.n()),
        })
    }

    /// Same model with a different `Φ` shift (0 gives the plain Itô drift).
    pub fn with_phi_shift(&self, phi_shift: f64) -> Self {
        Self {
            phi_shift,
            ..self.clone()
        }
    }

    fn local(&self, r: f64) -> Local {
        self.local_shifted(r, self.phi_shift)
    }

    fn local_shifted(&self, r: f64, phi_shift: f64) -> Local {
        if let Some(cut) = self.cfg.cutoff {
            let reg = regularize(
                &self.cfg.mobility,
                self.cfg.potential.as_ref(),
                cut,
                r,
                phi_shift,
            );
            return Local {
                m: reg.m,
                phi: reg.phi,
                g: reg.g,
            };
        }
        let m = self.cfg.mobility.eval_unchecked(r);
        let mut phi = match &self.cfg.potential {
            Some(p) => m.value * p.eval_unchecked(r).d2,
            None => 0.0,
        };
        if phi_shift > 0.0 {
            phi += stratonovich_shift(&m, phi_shift);
        }
        Local {
            m: m.value,
            phi,
            g: m.value.sqrt(),
        }
    }

    fn check_state(&self, u: &Field) -> Result<()> {
        if self.cfg.cutoff.is_none() && !(u.min() > 0.0) {
            return Err(Error::NonPositiveField { min: u.min() });
        }
        if u.grid() != self.grid {
            return Err(Error::GridMismatch {
                expected: self.grid.n(),
                got: u.grid().n(),
            });
        }
        Ok(())
    }

    /// Base step actually used: `dt0` capped by the semi-implicit stability
    /// bound `4 min a / (max Φ_eff⁺)²` at `u`, then shrunk so that an
    /// integer number of steps reaches `T` exactly.
    pub fn base_step(&self, u0: &Field) -> Result<(f64, u64)> {
        self.check_state(u0)?;
        let locals: Vec<Local> = u0.values().iter().map(|&r| self.local(r)).collect();
        let m: Vec<f64> = locals.iter().map(|l| l.m).collect();
        let a_min = face_average(&m).into_iter().fold(f64::INFINITY, f64::min);
        let phi_max = locals.iter().fold(0.0f64, |acc, l| acc.max(l.phi));
        let mut dt = self.cfg.dt0;
        if phi_max > 0.0 {
            dt = dt.min(4.0 * a_min / (phi_max * phi_max));
        }
        let t = self.cfg.t_final;
        if t == 0.0 {
            return Ok((dt, 0));
        }
        let steps = ((t / dt) * (1.0 - 1e-12)).ceil().max(1.0) as u64;
        Ok((t / steps as f64, steps))
    }
}

/// Face mobilities and the explicit second-order drift.
pub fn drift_split(u: &Field, model: &Model) -> Result<(Vec<f64>, Field)> {
    let (a, rhs, _) = split(u, model, model.phi_shift)?;
    Ok((a, rhs))
}

/// `drift_split` plus the cell noise coefficients `g(u)`.
fn split(u: &Field, model: &Model, phi_shift: f64) -> Result<(Vec<f64>, Field, Vec<f64>)> {
    model.check_state(u)?;
    let n = u.len();
    let (mut m, mut phi, mut g) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for &r in u.values() {
        let l = model.local_shifted(r, phi_shift);
        m.push(l.m);
        phi.push(l.phi);
        g.push(l.g);
    }
    let h = u.grid().h();
    let a = face_average(&m);
    let flux: Vec<f64> = face_average(&phi)
        .into_iter()
        .zip(face_gradient(u.values(), h))
        .map(|(p, d)| p * d)
        .collect();
    let rhs = Field::new(u.grid(), flux_divergence(&flux, h))?;
    Ok((a, rhs, g))
}

/// `L_a v = D_flux(a D_face(Δ_h v))` in flux form.
pub fn apply_operator(a_faces: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let lap: Vec<f64> = (0..n)
        .map(|i| (v[next(i, n)] - 2.0 * v[i] + v[prev(i, n)]) / (h * h))
        .collect();
    let flux: Vec<f64> = face_gradient(&lap, h)
        .into_iter()
        .zip(a_faces)
        .map(|(d, a)| a * d)
        .collect();
    flux_divergence(&flux, h)
}

/// Factored `I + dt L_a`, reusable for several right-hand sides.
#[derive(Debug, Clone)]
pub struct ImplicitOperator {
    a: Vec<f64>,
    dt: f64,
    h: f64,
    solver: Option<CyclicSolver>,
}

impl ImplicitOperator {
    pub fn new(a_faces: &[f64], dt: f64, h: f64) -> Result<Self> {
        let n = a_faces.len();
        if let Some(i) = a_faces.iter().position(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::OutOfRange(format!(
                "face mobility a[{i}] = {} must be positive",
                a_faces[i]
            )));
        }
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::OutOfRange(format!("dt = {dt} must be >= 0")));
        }
        if dt == 0.0 {
            return Ok(Self {
                a: a_faces.to_vec(),
                dt,
                h,
                solver: None,
            });
        }
        let s = dt / (h * h * h * h);
        let mut diags: [Vec<f64>; 5] = Default::default();
        for d in diags.iter_mut() {
            *d = vec![0.0; n];
        }
        for i in 0..n {
            let ap = a_faces[i];
            let am = a_faces[prev(i, n)];
            diags[0][i] = s * am;
            diags[1][i] = -s * (ap + 3.0 * am);
            diags[2][i] = 1.0 + s * 3.0 * (ap + am);
            diags[3][i] = -s * (3.0 * ap + am);
            diags[4][i] = s * ap;
        }
        let solver = CyclicPentadiagonal { diags }.factor()?;
        Ok(Self {
            a: a_faces.to_vec(),
            dt,
            h,
            solver: Some(solver),
        })
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        if self.dt == 0.0 {
            return v.to_vec();
        }
        let lv = apply_operator(&self.a, v, self.h);
        v.iter().zip(lv).map(|(x, l)| x + self.dt * l).collect()
    }

    /// Solve with iterative refinement to `‖r‖_∞ ≤ 1e-11 ‖rhs‖_∞` (or until
    /// the residual stops shrinking), then restore the mean of `rhs` exactly
    /// (`L_a` annihilates constants and has zero mean, so this only shifts
    /// the residual by a constant).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let Some(solver) = &self.solver else {
            return Ok(rhs.to_vec());
        };
        let n = rhs.len() as f64;
        let mean = rhs.iter().sum::<f64>() / n;
        // solve for the fluctuation only; constants pass through unchanged
        let fluct: Vec<f64> = rhs.iter().map(|r| r - mean).collect();
        let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut v = solver.solve(&fluct);
        let mut prev = f64::INFINITY;
        for _ in 0..4 {
            let r: Vec<f64> = fluct
                .iter()
                .zip(self.apply(&v))
                .map(|(b, x)| b - x)
                .collect();
            let rn = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if rn <= 1e-11 * scale || rn > 0.5 * prev {
                break;
            }
            prev = rn;
            let dv = solver.solve(&r);
            for (x, d) in v.iter_mut().zip(dv) {
                *x += d;
            }
        }
        let vm = v.iter().sum::<f64>() / n;
        for x in &mut v {
            *x += mean - vm;
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Singular(
                "implicit solve produced non-finite values".into(),
            ));
        }
        Ok(v)
    }
}

/// `(I + dt L_a)^{-1} rhs`.
pub fn implicit_solve(a_faces: &[f64], rhs: &Field, dt: f64) -> Result<Field> {
    if a_faces.len() != rhs.len() {
        return Err(Error::GridMismatch {
            expected: rhs.len(),
            got: a_faces.len(),
        });
    }
    let op = ImplicitOperator::new(a_faces, dt, rhs.grid().h())?;
    Field::new(rhs.grid(), op.solve(rhs.values())?)
}

/// How the noise enters one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Integrator {
    /// Noise coefficient frozen at the start of the step.
    EulerMaruyama,
    /// Stratonovich predictor–corrector: noise coefficient averaged over the
    /// start and an Euler predictor, plain Itô drift `Φ`.
    Heun,
}

/// Proposal for one step of length `dt` with Brownian increments `dw`.
pub fn propose(
    model: &Model,
    u: &Field,
    dt: f64,
    dw: &[f64],
    integrator: Integrator,
) -> Result<Field> {
    let h = model.grid.h();
    let noise_of = |v: &Field| -> Vec<f64> {
        if model.samples.is_empty() {
            return vec![0.0; v.len()];
        }
        let g: Vec<f64> = v.values().iter().map(|&r| model.local(r).g).collect();
        noise_increment(&model.samples, &g, dw, h)
    };
    match integrator {
        Integrator::EulerMaruyama => {
            let (a, drift, g) = split(u, model, model.phi_shift)?;
            let noise = if model.samples.is_empty() {
                vec![0.0; u.len()]
            } else {
                noise_increment(&model.samples, &g, dw, h)
            };
            let rhs: Vec<f64> = u
                .values()
                .iter()
                .zip(drift.values())
                .zip(&noise)
                .map(|((x, d), w)| x + dt * d + w)
                .collect();
            let op = ImplicitOperator::new(&a, dt, h)?;
            Field::new(u.grid(), op.solve(&rhs)?)
        }
        Integrator::Heun => {
            let (a, drift, g) = split(u, model, 0.0)?;
            let op = ImplicitOperator::new(&a, dt, h)?;
            let base: Vec<f64> = u
                .values()
                .iter()
                .zip(drift.values())
                .map(|(x, d)| x + dt * d)
                .collect();
            let n0 = if model.samples.is_empty() {
                vec![0.0; u.len()]
            } else {
                noise_increment(&model.samples, &g, dw, h)
            };
            let pred_rhs: Vec<f64> = base.iter().zip(&n0).map(|(b, w)| b + w).collect();
            let pred = Field::new(u.grid(), op.solve(&pred_rhs)?)?;
            if model.cfg.cutoff.is_none() && !(pred.min() > 0.0) {
                return Err(Error::NonPositiveField { min: pred.min() });
            }
            let n1 = noise_of(&pred);
            let rhs: Vec<f64> = base
                .iter()
                .zip(n0.iter().zip(&n1))
                .map(|(b, (p, q))| b + 0.5 * (p + q))
                .collect();
            Field::new(u.grid(), op.solve(&rhs)?)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RejectReason {
    /// Minimum at or below `pos_floor`.
    Floor,
    /// Minimum dropped below `ρ` times the previous minimum.
    Drop,
    /// `H¹` norm above `h1_max`.
    H1,
    /// Non-finite values or a failed linear solve.
    NonFinite,
}

impl RejectReason {
    pub fn is_positivity(&self) -> bool {
        matches!(self, RejectReason::Floor | RejectReason::Drop)
    }
}

/// Acceptance test for a proposal.
pub fn check_proposal(model: &Model, prev_min: f64, next: &Field) -> Option<RejectReason> {
    let cfg = &model.cfg;
    if !next.is_finite() {
        return Some(RejectReason::NonFinite);
    }
    let min = next.min();
    if !(min > cfg.pos_floor) {
        return Some(RejectReason::Floor);
    }
    if min < cfg.drop_ratio * prev_min {
        return Some(RejectReason::Drop);
    }
    if h1_bound_sq(next) <= cfg.h1_max * cfg.h1_max * (1.0 - 1e-12) {
        return None;
    }
    match next.sobolev_norm_with(&model.plan, 1.0) {
        Ok(h1) if h1 <= cfg.h1_max => None,
        _ => Some(RejectReason::H1),
    }
}

/// Upper bound on the squared spectral `H¹` norm without a transform: the
/// forward-difference symbol `(2/h)|sin(πkh)|` is at least `(2/π)·2π|k|`
/// for `|k| ≤ n/2`.
fn h1_bound_sq(u: &Field) -> f64 {
    let v = u.values();
    let n = v.len();
    let h = u.grid().h();
    let (mut l2, mut d2) = (0.0, 0.0);
    for i in 0..n {
        let d = (v[next(i, n)] - v[i]) / h;
        l2 += v[i] * v[i];
        d2 += d * d;
    }
    let pi2 = core::f64::consts::PI * core::f64::consts::PI;
    h * (l2 + 0.25 * pi2 * d2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub u_next: Field,
    pub dt_used: f64,
    pub rejections: u32,
    pub reason: Option<RejectReason>,
}

/// Data carried by a blow-up: the monitored pair at the last accepted state.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlowUp {
    pub t: f64,
    pub min_u: f64,
    pub h1_norm: f64,
    pub last_reason: RejectReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
    pub positivity_rejections: u64,
    pub h1_rejections: u64,
    pub nonfinite_rejections: u64,
    pub min_dt: f64,
    pub max_level: u8,
}

/// Adaptive stepper over one Brownian path.
#[derive(Debug, Clone)]
pub struct Stepper {
    model: Model,
    tree: BrownianTree,
    bridge: BridgeCache,
    integrator: Integrator,
    base_dt: f64,
    steps: u64,
    /// Current base step, level and node inside it.
    step: u64,
    level: u8,
    node: u64,
    min_level: u8,
    streak: u32,
    pub u: Field,
    pub stats: StepStats,
}

impl Stepper {
    /// Stepper starting from the configured initial condition at refinement
    /// `min_level` (the coarsest level it will ever use).
    pub fn new(model: &Model, path: u64, min_level: u8, integrator: Integrator) -> Result<Self> {
        let u0 = model.cfg.initial.field(model.grid)?;
        let (base_dt, steps) = model.base_step(&u0)?;
        let tree = BrownianTree::new(model.cfg.seed, path, base_dt, model.cfg.noise.len());
        Ok(Self {
            model: model.clone(),
            tree,
            bridge: BridgeCache::default(),
            integrator,
            base_dt,
            steps,
            step: 0,
            level: min_level,
            node: 0,
            min_level,
            streak: 0,
            u: u0,
            stats: StepStats {
                min_dt: f64::INFINITY,
                ..Default::default()
            },
        })
    }

    pub fn base_dt(&self) -> f64 {
        self.base_dt
    }

    pub fn dt(&self) -> f64 {
        self.base_dt / (1u64 << self.level) as f64
    }

    pub fn time(&self) -> f64 {
        if self.step >= self.steps {
            return self.model.cfg.t_final;
        }
        (self.step as f64 + self.node as f64 / (1u64 << self.level) as f64) * self.base_dt
    }

    pub fn finished(&self) -> bool {
        self.step >= self.steps
    }

    /// One attempt at the current position; on rejection the level is
    /// refined and the position kept.
    pub fn attempt(&mut self) -> core::result::Result<StepOutcome, BlowUp> {
        let dt = self.dt();
        if dt < self.model.cfg.dt_min || self.level > MAX_LEVEL {
            return Err(self.blow_up(RejectReason::NonFinite));
        }
        let dw = self
            .tree
            .increment_cached(&mut self.bridge, self.step, self.level, self.node);
        let reason = match propose(&self.model, &self.u, dt, &dw, self.integrator) {
            Ok(next) => match check_proposal(&self.model, self.u.min(), &next) {
                None => {
                    self.accept(next.clone(), dt);
                    return Ok(StepOutcome {
                        accepted: true,
                        u_next: next,
                        dt_used: dt,
                        rejections: 0,
                        reason: None,
                    });
                }
                Some(r) => r,
            },
            Err(_) => RejectReason::NonFinite,
        };
        self.stats.rejected += 1;
        match reason {
            RejectReason::Floor | RejectReason::Drop => self.stats.positivity_rejections += 1,
            RejectReason::H1 => self.stats.h1_rejections += 1,
            RejectReason::NonFinite => self.stats.nonfinite_rejections += 1,
        }
        self.streak = 0;
        let finer = self.base_dt / (1u64 << (self.level + 1).min(63)) as f64;
        if self.level >= MAX_LEVEL || finer < self.model.cfg.dt_min {
            return Err(self.blow_up(reason));
        }
        self.level += 1;
        self.node *= 2;
        Ok(StepOutcome {
            accepted: false,
            u_next: self.u.clone(),
            dt_used: dt,
            rejections: 1,
            reason: Some(reason),
        })
    }

    /// Attempts until one step is accepted.
    pub fn advance(&mut self) -> core::result::Result<StepOutcome, BlowUp> {
        let mut rejections = 0;
        loop {
            let mut out = self.attempt()?;
            if out.accepted {
                out.rejections = rejections;
                return Ok(out);
            }
            rejections += 1;
        }
    }

    fn accept(&mut self, next: Field, dt: f64) {
        self.u = next;
        self.stats.accepted += 1;
        self.stats.min_dt = self.stats.min_dt.min(dt);
        self.stats.max_level = self.stats.max_level.max(self.level);
        self.node += 1;
        if self.node == 1u64 << self.level {
            self.node = 0;
            self.step += 1;
        }
        self.streak += 1;
        // coarsen only where the position sits on a node of the coarser level
        if self.streak >= RECOVERY_STEPS
            && self.level > self.min_level
            && self.node.is_multiple_of(2)
        {
            self.level -= 1;
            self.node /= 2;
            self.streak = 0;
        }
    }

    fn blow_up(&self, reason: RejectReason) -> BlowUp {
        BlowUp {
            t: self.time(),
            min_u: self.u.min(),
            h1_norm: self.u.sobolev_norm(1.0).unwrap_or(f64::NAN),
            last_reason: reason,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "status", rename_all = "snake_case"))]
pub enum RunStatus {
    Completed,
    BlowUp(BlowUp),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub status: RunStatus,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub final_field: Field,
    pub stats: StepStats,
    pub base_dt: f64,
}

/// Options for [`run_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub min_level: u8,
    pub integrator: Integrator,
    pub record: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            min_level: 0,
            integrator: Integrator::EulerMaruyama,
            record: true,
        }
    }
}

/// One trajectory for path index `path`.
pub fn run(cfg: &SimConfig, path: u64) -> Result<RunResult> {
    run_with(&Model::new(cfg)?, path, RunOptions::default())
}

pub fn run_with(model: &Model, path: u64, opts: RunOptions) -> Result<RunResult> {
    let cfg = &model.cfg;
    let diag = if opts.record {
        Some(Diagnostics::new(
            cfg.mobility.clone(),
            cfg.potential.clone(),
            cfg.beta_diag,
            cfg.gamma_diag,
        )?)
    } else {
        None
    };
    let mut stepper = Stepper::new(model, path, opts.min_level, opts.integrator)?;
    let mut rows = Vec::new();
    let record = |rows: &mut Vec<DiagnosticsRow>, t: f64, u: &Field, dt: f64| -> Result<()> {
        if let Some(d) = &diag {
            rows.push(d.row(t, u, dt)?);
        }
        Ok(())
    };
    record(&mut rows, 0.0, &stepper.u, 0.0)?;
    let mut since_row = 0usize;
    let mut last_dt = 0.0;
    while !stepper.finished() {
        match stepper.advance() {
            Ok(out) => {
                since_row += 1;
                last_dt = out.dt_used;
                if since_row == cfg.output_stride && !stepper.finished() {
                    record(&mut rows, stepper.time(), &stepper.u, out.dt_used)?;
                    since_row = 0;
                }
            }
            Err(b) => {
                return Ok(RunResult {
                    status: RunStatus::BlowUp(b),
                    diagnostics: rows,
                    final_field: stepper.u.clone(),
                    stats: stepper.stats,
                    base_dt: stepper.base_dt,
                });
            }
        }
    }
    if stepper.stats.accepted > 0 {
        record(&mut rows, cfg.t_final, &stepper.u, last_dt)?;
    }
    Ok(RunResult {
        status: RunStatus::Completed,
        diagnostics: rows,
        final_field: stepper.u.clone(),
        stats: stepper.stats,
        base_dt: stepper.base_dt,
    })
}

#[cfg(test)]
mod tests;
