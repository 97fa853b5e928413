//! Coupled-refinement studies on a single Brownian path: strong
//! self-convergence and the Itô/Stratonovich/Heun scheme comparison.

use super::{run_with, Integrator, Model, RunOptions, RunResult, RunStatus, Scheme};
use crate::error::{Error, Result};
use crate::grid::{lq_norm, Field};
use crate::stats::loglog_slope;
use alloc::vec::Vec;

fn l2_distance(a: &Field, b: &Field) -> Result<f64> {
    let diff: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x - y)
        .collect();
    lq_norm(&diff, 2.0)
}

fn final_state(res: RunResult) -> Option<Field> {
    match res.status {
        RunStatus::Completed => Some(res.final_field),
        RunStatus::BlowUp(_) => None,
    }
}

/// Final states of one path at `dt0, dt0/2, …, dt0/2^levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPath {
    /// `None` when some level blew up.
    pub finals: Option<Vec<Field>>,
    pub base_dt: f64,
}

impl CoupledPath {
    /// `‖u_ℓ(T) - u_{ℓ+1}(T)‖_{L²}` for consecutive levels.
    pub fn errors(&self) -> Option<Vec<f64>> {
        let f = self.finals.as_ref()?;
        f.windows(2)
            .map(|w| l2_distance(&w[0], &w[1]).ok())
            .collect()
    }
}

pub fn coupled_path(model: &Model, path: u64, levels: u8) -> Result<CoupledPath> {
    if levels < 1 {
        return Err(Error::InvalidConfig(
            "need at least one refinement level".into(),
        ));
    }
    let mut finals = Vec::with_capacity(levels as usize + 1);
    let mut base_dt = 0.0;
    for level in 0..=levels {
        let opts = RunOptions {
            min_level: level,
            integrator: Integrator::EulerMaruyama,
            record: false,
        };
        let res = run_with(model, path, opts)?;
        base_dt = res.base_dt;
        match final_state(res) {
            Some(f) => finals.push(f),
            None => {
                return Ok(CoupledPath {
                    finals: None,
                    base_dt,
                })
            }
        }
    }
    Ok(CoupledPath {
        finals: Some(finals),
        base_dt,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ConvergenceReport {
    /// Coarser step of each consecutive pair.
    pub dts: Vec<f64>,
    /// Path-averaged `‖u_ℓ(T) - u_{ℓ+1}(T)‖_{L²}`.
    pub mean_errors: Vec<f64>,
    pub order: Option<f64>,
    pub used_paths: usize,
    pub excluded_paths: usize,
}

/// Aggregate coupled paths (in path-index order) into mean errors and a
/// least-squares order.
pub fn convergence_report(paths: &[CoupledPath]) -> ConvergenceReport {
    let mut sums: Vec<f64> = Vec::new();
    let mut used = 0;
    let mut base_dt = 0.0;
    for p in paths {
        let Some(errs) = p.errors() else { continue };
        if sums.is_empty() {
            sums = alloc::vec![0.0; errs.len()];
        }
        for (s, e) in sums.iter_mut().zip(&errs) {
            *s += e;
        }
        used += 1;
        base_dt = p.base_dt;
    }
    let mean_errors: Vec<f64> = sums.iter().map(|s| s / used.max(1) as f64).collect();
    let dts: Vec<f64> = (0..mean_errors.len())
        .map(|l| base_dt / (1u64 << l) as f64)
        .collect();
    let pts: Vec<(f64, f64)> = dts
        .iter()
        .copied()
        .zip(mean_errors.iter().copied())
        .collect();
    ConvergenceReport {
        order: loglog_slope(&pts),
        dts,
        mean_errors,
        used_paths: used,
        excluded_paths: paths.len() - used,
    }
}

/// Outcome of the scheme comparison on one path.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SchemeComparisonPath {
    /// Stratonovich run and Itô run with the explicit `Φ` shift agree bit
    /// for bit (final field and every diagnostics row).
    pub bit_equal: bool,
    /// `‖u_EM(T) - u_Heun(T)‖_{L²}` per level; `None` on blow-up.
    pub gaps: Option<Vec<f64>>,
}

/// `model` must be a Stratonovich configuration.
pub fn scheme_comparison_path(
    model: &Model,
    path: u64,
    levels: u8,
) -> Result<SchemeComparisonPath> {
    if model.cfg.scheme != Scheme::Stratonovich {
        return Err(Error::InvalidConfig(
            "scheme comparison needs a Stratonovich configuration".into(),
        ));
    }
    let mut ito_cfg = model.cfg.clone();
    ito_cfg.scheme = Scheme::Ito;
    ito_cfg.ito_correction = model.intensity;
    let ito = Model::new(&ito_cfg)?;
    let a = run_with(model, path, RunOptions::default())?;
    let b = run_with(&ito, path, RunOptions::default())?;
    let bits = |r: &RunResult| -> Vec<u64> {
        let mut v: Vec<u64> = r.final_field.values().iter().map(|x| x.to_bits()).collect();
        for row in &r.diagnostics {
            v.extend(row.fields().iter().map(|x| x.to_bits()));
        }
        v
    };
    let bit_equal = a.status == b.status && bits(&a) == bits(&b);
    let mut gaps = Vec::with_capacity(levels as usize);
    for level in 0..levels {
        let em = run_with(
            model,
            path,
            RunOptions {
                min_level: level,
                integrator: Integrator::EulerMaruyama,
                record: false,
            },
        )?;
        let heun = run_with(
            model,
            path,
            RunOptions {
                min_level: level,
                integrator: Integrator::Heun,
                record: false,
            },
        )?;
        match (final_state(em), final_state(heun)) {
            (Some(x), Some(y)) => gaps.push(l2_distance(&x, &y)?),
            _ => {
                return Ok(SchemeComparisonPath {
                    bit_equal,
                    gaps: None,
                })
            }
        }
    }
    Ok(SchemeComparisonPath {
        bit_equal,
        gaps: Some(gaps),
    })
}

/// Spatial refinement of one path on grids `n, 2n, …, 2^levels n`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SpatialReport {
    pub ns: Vec<usize>,
    /// `‖I u_ℓ(T) - u_{ℓ+1}(T)‖_{L²}` with `I` the spectral interpolation
    /// onto the finer grid; `None` on blow-up.
    pub errors: Option<Vec<f64>>,
    pub order: Option<f64>,
    /// Common base step used on every grid.
    pub dt: f64,
}

/// Runs the same Brownian path on nested grids with one shared base step
/// (the smallest stability-capped step over all grids), so the differences
/// are spatial.
pub fn spatial_study(cfg: &super::SimConfig, path: u64, levels: u8) -> Result<SpatialReport> {
    if levels < 1 {
        return Err(Error::InvalidConfig(
            "need at least one refinement level".into(),
        ));
    }
    if !matches!(
        cfg.initial,
        super::InitialCondition::Constant { .. } | super::InitialCondition::Harmonic { .. }
    ) {
        return Err(Error::InvalidConfig(
            "spatial refinement needs a grid-independent initial condition".into(),
        ));
    }
    let ns: Vec<usize> = (0..=levels).map(|l| cfg.n << l).collect();
    let mut configs = Vec::with_capacity(ns.len());
    let mut dt = cfg.dt0;
    for &n in &ns {
        let mut c = cfg.clone();
        c.n = n;
        let model = Model::new(&c)?;
        let u0 = c.initial.field(model.grid)?;
        dt = dt.min(model.base_step(&u0)?.0);
        configs.push(c);
    }
    let mut finals: Vec<Field> = Vec::with_capacity(ns.len());
    for c in &mut configs {
        c.dt0 = dt;
        let res = run_with(
            &Model::new(c)?,
            path,
            RunOptions {
                record: false,
                ..RunOptions::default()
            },
        )?;
        match final_state(res) {
            Some(f) => finals.push(f),
            None => {
                return Ok(SpatialReport {
                    ns,
                    errors: None,
                    order: None,
                    dt,
                })
            }
        }
    }
    let mut errors = Vec::with_capacity(levels as usize);
    for w in finals.windows(2) {
        let coarse = w[0].resample_spectral(w[1].len())?;
        errors.push(l2_distance(&coarse, &w[1])?);
    }
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| 1.0 / n as f64)
        .zip(errors.iter().copied())
        .collect();
    Ok(SpatialReport {
        order: loglog_slope(&pts),
        ns,
        errors: Some(errors),
        dt,
    })
}
