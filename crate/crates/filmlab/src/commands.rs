//! Subcommand bodies. Each returns its report and writes its artifacts
//! into the output directory; nothing here depends on the worker count.

use std::path::PathBuf;

use filmlab_core::coefficients::{
    validate_mobility, validate_pair, validate_potential, PotentialSpec,
};
use filmlab_core::functionals::{
    check_admissible, check_sup_bound_explicit, gamma_range, random_positive_field,
    sup_bound_ratios,
};
use filmlab_core::maxreg::{
    caccioppoli_horizon, caccioppoli_ratio, caccioppoli_stats, caccioppoli_trial, mr_stats,
    mr_trial, random_forcing, random_path, CaccioppoliStats, Cube, ExactSolution, ForcingSpec,
    MrStats, WeightSpec,
};
use filmlab_core::noise::{intensity_profile, regularity_sums};
use filmlab_core::rng::RNG_SCHEME;
use filmlab_core::solver::{
    convergence_report, coupled_path, run_with, scheme_comparison_path, spatial_study, BlowUp,
    ConvergenceReport, Model, RunOptions, RunStatus, Scheme, SimConfig, SpatialReport, StepStats,
    INTENSITY_TOL,
};
use filmlab_core::stats::loglog_slope;
use filmlab_core::TorusGrid;
use num_complex::Complex64;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::{io, par_map, CliError, VERSION};

/// Shared inputs of every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub out: PathBuf,
}

impl Context {
    pub fn new(config: ExperimentConfig) -> Self {
        Self {
            config,
            threads: 0,
            out: PathBuf::from("filmlab-out"),
        }
    }

    pub fn config_hash(&self) -> String {
        io::content_hash(&self.config.canonical())
    }

    fn envelope<T: Serialize>(&self, command: &'static str, report: T) -> Envelope<'_, T> {
        Envelope {
            version: VERSION,
            rng_scheme: RNG_SCHEME,
            command,
            config_hash: self.config_hash(),
            config: &self.config,
            report,
        }
    }

    fn write_json<T: Serialize>(
        &self,
        name: &str,
        command: &'static str,
        report: &T,
    ) -> Result<(), CliError> {
        io::write(
            &self.out,
            name,
            &io::to_json(&self.envelope(command, report)),
        )
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    version: &'static str,
    rng_scheme: &'static str,
    command: &'static str,
    config_hash: String,
    config: &'a ExperimentConfig,
    report: T,
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub check: &'static str,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub rows: Vec<CheckRow>,
    pub all_pass: bool,
}

impl ValidateReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let tag = match r.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Skip => "SKIP",
            };
            s.push_str(&format!("{:<18} {tag}  {}\n", r.check, r.detail));
        }
        s
    }
}

fn row(check: &'static str, ok: bool, detail: String) -> CheckRow {
    CheckRow {
        check,
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

pub fn validate(cfg: &ExperimentConfig) -> Result<ValidateReport, CliError> {
    // the intensity condition gets its own row, so check structure as Itô
    let mut structural = cfg.clone();
    structural.scheme.kind = Scheme::Ito;
    let sim = structural.sim_unchecked()?;
    let grid = sim.grid()?;
    let mut rows = vec![match sim.validate() {
        Ok(()) => row(
            "structure",
            true,
            format!("n={} T={} dt0={}", sim.n, sim.t_final, sim.dt0),
        ),
        Err(e) => row("structure", false, e.to_string()),
    }];

    rows.push(match validate_mobility(&sim.mobility) {
        Ok(r) => row("mobility", true, format!("n={} nu={}", r.n, r.nu)),
        Err(e) => row("mobility", false, e.to_string()),
    });
    match &sim.potential {
        Some(pot) => {
            rows.push(match validate_potential(pot) {
                Ok(r) => row(
                    "potential",
                    true,
                    format!("theta={} min={:.3e}", r.theta, r.min_value),
                ),
                Err(e) => row("potential", false, e.to_string()),
            });
            let pair = validate_pair(&sim.mobility, pot);
            let detail = if pair.pass {
                format!(
                    "theta={} > {:?}",
                    pair.theta,
                    pair.theta_threshold.unwrap_or(f64::NAN)
                )
            } else {
                pair.messages.join("; ")
            };
            rows.push(row("pair", pair.pass, detail));
        }
        None => {
            for check in ["potential", "pair"] {
                rows.push(CheckRow {
                    check,
                    status: Status::Skip,
                    detail: "no potential".into(),
                });
            }
        }
    }
    let sums = regularity_sums(&sim.noise);
    rows.push(row(
        "noise_regularity",
        sums.w2inf.is_finite() && sums.h2.is_finite(),
        format!(
            "modes={} W2inf={:.6e} H2={:.6e}",
            sim.noise.len(),
            sums.w2inf,
            sums.h2
        ),
    ));
    let (c, dev) = intensity_profile(&sim.noise, grid);
    rows.push(match cfg.scheme.kind {
        Scheme::Stratonovich => row(
            "intensity",
            dev <= INTENSITY_TOL,
            format!("C={c:.6e} deviation={dev:.3e}"),
        ),
        Scheme::Ito => row(
            "intensity",
            true,
            format!("C={c:.6e} deviation={dev:.3e} (not required for Ito)"),
        ),
    });
    let a = &cfg.assumptions;
    let adm = check_admissible(a.p, a.kappa, a.s, a.q, 1);
    rows.push(row(
        "admissibility",
        adm.admissible,
        format!(
            "p={} kappa={} s={} q={} weight={} embedding={} trace={}",
            a.p, a.kappa, a.s, a.q, adm.weight_ok, adm.embedding_ok, adm.trace_ok
        ),
    ));
    let all_pass = rows.iter().all(|r| r.status != Status::Fail);
    Ok(ValidateReport { rows, all_pass })
}

pub fn cmd_validate(ctx: &Context, write: bool) -> Result<ValidateReport, CliError> {
    let rep = validate(&ctx.config)?;
    if write {
        ctx.write_json("validate_report.json", "validate", &rep)?;
    }
    Ok(rep)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Serialize)]
pub struct PathEntry {
    pub path: u64,
    pub file: String,
    pub status: RunStatus,
    pub stats: StepStats,
    pub base_dt: f64,
    pub rows: usize,
    pub min_u: f64,
    pub max_mass_drift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub paths: Vec<PathEntry>,
    pub completed: usize,
    pub blow_ups: usize,
}

/// Writes `path_<k>.csv`, `final_<k>.dat` and `manifest.json`. Blow-ups
/// are recorded per path, not returned as errors.
pub fn cmd_simulate(ctx: &Context) -> Result<SimulateReport, CliError> {
    let sim = ctx.config.sim()?;
    let model = Model::new(&sim)?;
    let results = par_map(ctx.threads, sim.paths, |p| {
        Ok(run_with(&model, p, RunOptions::default())?)
    })?;
    let mut entries = Vec::with_capacity(results.len());
    for (p, res) in results.iter().enumerate() {
        let file = format!("path_{p}.csv");
        io::write(&ctx.out, &file, &io::diagnostics_csv(&res.diagnostics))?;
        io::write(
            &ctx.out,
            &format!("final_{p}.dat"),
            &io::field_snapshot(&res.final_field),
        )?;
        let m0 = res.diagnostics.first().map_or(0.0, |r| r.mass);
        entries.push(PathEntry {
            path: p as u64,
            file,
            status: res.status,
            stats: res.stats,
            base_dt: res.base_dt,
            rows: res.diagnostics.len(),
            min_u: res
                .diagnostics
                .iter()
                .map(|r| r.min_u)
                .fold(f64::INFINITY, f64::min),
            max_mass_drift: res
                .diagnostics
                .iter()
                .map(|r| (r.mass - m0).abs())
                .fold(0.0, f64::max),
        });
    }
    let blow_ups = entries
        .iter()
        .filter(|e| matches!(e.status, RunStatus::BlowUp(_)))
        .count();
    let rep = SimulateReport {
        completed: entries.len() - blow_ups,
        blow_ups,
        paths: entries,
    };
    ctx.write_json("manifest.json", "simulate", &rep)?;
    Ok(rep)
}

// ---------------------------------------------------------- compare-schemes

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub levels: u8,
    pub paths: usize,
    pub bit_equal: bool,
    pub bit_equal_paths: usize,
    /// Step of each level.
    pub dts: Vec<f64>,
    /// Path-averaged `‖u_EM(T) - u_Heun(T)‖_{L²}`.
    pub mean_gaps: Vec<f64>,
    pub order: Option<f64>,
    pub used_paths: usize,
    pub excluded_paths: usize,
}

fn base_dt(model: &Model) -> Result<f64, CliError> {
    let u0 = model.cfg.initial.field(model.grid)?;
    Ok(model.base_step(&u0)?.0)
}

/// The configuration is run as Stratonovich whatever its `scheme.kind`.
pub fn compare_schemes(
    sim: &SimConfig,
    threads: usize,
    levels: u8,
) -> Result<CompareReport, CliError> {
    if levels == 0 {
        return Err(CliError::Config(
            "compare-schemes needs at least one level".into(),
        ));
    }
    let mut sim = sim.clone();
    sim.scheme = Scheme::Stratonovich;
    sim.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let model = Model::new(&sim)?;
    let dt = base_dt(&model)?;
    let per_path = par_map(threads, sim.paths, |p| {
        Ok(scheme_comparison_path(&model, p, levels)?)
    })?;
    let bit_equal_paths = per_path.iter().filter(|c| c.bit_equal).count();
    let mut sums = vec![0.0; levels as usize];
    let mut used = 0;
    for gaps in per_path.iter().filter_map(|c| c.gaps.as_ref()) {
        for (s, g) in sums.iter_mut().zip(gaps) {
            *s += g;
        }
        used += 1;
    }
    let mean_gaps: Vec<f64> = sums.iter().map(|s| s / used.max(1) as f64).collect();
    let dts: Vec<f64> = (0..levels).map(|l| dt / (1u64 << l) as f64).collect();
    let pts: Vec<(f64, f64)> = dts.iter().copied().zip(mean_gaps.iter().copied()).collect();
    Ok(CompareReport {
        levels,
        paths: per_path.len(),
        bit_equal: bit_equal_paths == per_path.len(),
        bit_equal_paths,
        order: if used > 0 { loglog_slope(&pts) } else { None },
        dts,
        mean_gaps,
        used_paths: used,
        excluded_paths: per_path.len() - used,
    })
}

pub fn cmd_compare_schemes(ctx: &Context, levels: u8) -> Result<CompareReport, CliError> {
    let rep = compare_schemes(&ctx.config.sim_unchecked()?, ctx.threads, levels)?;
    ctx.write_json("compare_report.json", "compare-schemes", &rep)?;
    if !rep.bit_equal {
        return Err(CliError::Property(format!(
            "Stratonovich and shifted Ito runs differ on {} of {} paths",
            rep.paths - rep.bit_equal_paths,
            rep.paths
        )));
    }
    Ok(rep)
}

// ---------------------------------------------------------------- converge

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeReport {
    pub temporal: ConvergenceReport,
    pub spatial: Option<SpatialReport>,
}

pub fn temporal_convergence(
    sim: &SimConfig,
    threads: usize,
    levels: u8,
) -> Result<ConvergenceReport, CliError> {
    if levels == 0 {
        return Err(CliError::Config("converge needs at least one level".into()));
    }
    let model = Model::new(sim)?;
    let paths = par_map(threads, sim.paths, |p| Ok(coupled_path(&model, p, levels)?))?;
    Ok(convergence_report(&paths))
}

pub fn cmd_converge(
    ctx: &Context,
    levels: u8,
    spatial_levels: u8,
) -> Result<ConvergeReport, CliError> {
    let sim = ctx.config.sim()?;
    let temporal = temporal_convergence(&sim, ctx.threads, levels)?;
    let spatial = if spatial_levels > 0 {
        Some(spatial_study(&sim, 0, spatial_levels)?)
    } else {
        None
    };
    let rep = ConvergeReport { temporal, spatial };
    ctx.write_json("converge_report.json", "converge", &rep)?;
    Ok(rep)
}

// ------------------------------------------------------------ inequalities

#[derive(Debug, Clone, Serialize)]
pub struct InequalityParams {
    pub corpus: usize,
    pub n: usize,
    pub modes: u32,
    pub seed: u64,
    pub betas: Vec<f64>,
    pub thetas: Vec<f64>,
}

impl Default for InequalityParams {
    fn default() -> Self {
        Self {
            corpus: 1000,
            n: 128,
            modes: 8,
            seed: 0,
            betas: vec![-0.4, 0.0, 0.5],
            thetas: vec![3.0, 8.0],
        }
    }
}

pub const GAMMA_TABLE_BETAS: [f64; 7] = [-0.4, -0.2, 0.0, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, Serialize)]
pub struct ExplicitCell {
    pub beta: f64,
    pub theta: f64,
    pub passes: usize,
    pub failures: usize,
    /// Largest `lhs / rhs` over the corpus.
    pub max_ratio: f64,
}

/// Largest left-over-right ratios of the bounds with implicit constants,
/// evaluated against `φ = r^{-θ}`.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationCell {
    pub beta: f64,
    pub theta: f64,
    pub r_313: f64,
    pub r_energy_min: f64,
    pub r_energy_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaRow {
    pub beta: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub params: InequalityParams,
    pub explicit: Vec<ExplicitCell>,
    pub calibration: Vec<CalibrationCell>,
    pub gamma_table: Vec<GammaRow>,
    pub total_failures: usize,
}

pub fn inequalities(
    params: &InequalityParams,
    threads: usize,
) -> Result<InequalityReport, CliError> {
    let grid = TorusGrid::new(params.n)?;
    let mut cells = Vec::new();
    for &beta in &params.betas {
        for &theta in &params.thetas {
            cells.push((beta, theta));
        }
    }
    // one entry per corpus field: (pass, ratio) per cell and the calibration ratios
    let per_field = par_map(threads, params.corpus, |i| {
        let f = random_positive_field(grid, params.modes, params.seed, i);
        let mut out = Vec::with_capacity(cells.len());
        for &(beta, theta) in &cells {
            let b = check_sup_bound_explicit(&f, beta, theta)?;
            let r = sup_bound_ratios(&f, beta, &PotentialSpec::PurePower { theta })?;
            out.push((b.pass, b.lhs / b.rhs, r));
        }
        Ok(out)
    })?;
    let mut explicit = Vec::with_capacity(cells.len());
    let mut calibration = Vec::with_capacity(cells.len());
    for (c, &(beta, theta)) in cells.iter().enumerate() {
        let column = per_field.iter().map(|f| &f[c]);
        let passes = column.clone().filter(|x| x.0).count();
        let fold = |g: fn(&(bool, f64, filmlab_core::functionals::SupRatios)) -> f64| {
            column.clone().map(g).fold(0.0f64, f64::max)
        };
        explicit.push(ExplicitCell {
            beta,
            theta,
            passes,
            failures: per_field.len() - passes,
            max_ratio: fold(|x| x.1),
        });
        calibration.push(CalibrationCell {
            beta,
            theta,
            r_313: fold(|x| x.2.r_313),
            r_energy_min: fold(|x| x.2.r_energy_min),
            r_energy_max: fold(|x| x.2.r_energy_max),
        });
    }
    let gamma_table = GAMMA_TABLE_BETAS
        .iter()
        .map(|&beta| {
            let (lo, hi) = gamma_range(beta)?;
            Ok(GammaRow { beta, lo, hi })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let total_failures = explicit.iter().map(|c| c.failures).sum();
    Ok(InequalityReport {
        params: params.clone(),
        explicit,
        calibration,
        gamma_table,
        total_failures,
    })
}

pub fn cmd_inequalities(
    ctx: &Context,
    params: &InequalityParams,
    write: bool,
) -> Result<InequalityReport, CliError> {
    let rep = inequalities(params, ctx.threads)?;
    if write {
        ctx.write_json("inequalities_report.json", "inequalities", &rep)?;
    }
    Ok(rep)
}

// ------------------------------------------------------------------ maxreg

#[derive(Debug, Clone, Serialize)]
pub struct MrRun {
    pub lambda: f64,
    pub weight: WeightSpec,
    pub stats: MrStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaccioppoliReport {
    pub horizon: f64,
    pub stats: CaccioppoliStats,
    /// Ratio for a spatially constant solution; exactly 1.
    pub constant_control: f64,
}

pub fn mr_run(ctx: &Context, weight: WeightSpec, lambda: f64) -> Result<MrRun, CliError> {
    let setup = ctx.config.mr_setup(weight, lambda)?;
    let forcing = random_forcing(setup.seed, setup.t_final, setup.k_modes, setup.pieces)?;
    let pairs = par_map(ctx.threads, setup.trials, |t| {
        Ok((
            mr_trial(&setup, &forcing, t, setup.n_t)?,
            mr_trial(&setup, &forcing, t, 2 * setup.n_t)?,
        ))
    })?;
    let (coarse, fine): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(MrRun {
        lambda,
        weight,
        stats: mr_stats(coarse, &fine)?,
    })
}

pub fn caccioppoli(ctx: &Context) -> Result<CaccioppoliReport, CliError> {
    let (setup, scales) = ctx.config.caccioppoli_setup()?;
    let horizon = caccioppoli_horizon(&scales);
    let per_trial = par_map(ctx.threads, setup.trials, |t| {
        Ok(caccioppoli_trial(&setup, &scales, t)?)
    })?;
    let stats = caccioppoli_stats(&scales, per_trial);
    // constant data: only the zero mode is nonzero
    let path = random_path(setup.seed, 0, setup.lambda, horizon, setup.pieces)?;
    let mut data = vec![Complex64::new(0.0, 0.0); setup.k_modes + 1];
    data[0] = Complex64::new(1.0, 0.0);
    let sol = ExactSolution::new(&path, &ForcingSpec::zero(setup.k_modes), &data, horizon)?;
    let r = scales[0];
    let constant_control = caccioppoli_ratio(
        &sol,
        Cube {
            t: 4.5 * r,
            x: 0.5,
            r,
        },
    )?;
    Ok(CaccioppoliReport {
        horizon,
        stats,
        constant_control,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxregReport {
    pub runs: Vec<MrRun>,
}

pub fn cmd_maxreg(ctx: &Context) -> Result<(MaxregReport, CaccioppoliReport), CliError> {
    let weights = ctx.config.weights()?;
    ctx.config.caccioppoli_setup()?;
    let mut runs = Vec::new();
    for &w in &weights {
        runs.push(mr_run(ctx, w, ctx.config.maxreg.lambda)?);
        if ctx.config.maxreg.control {
            runs.push(mr_run(ctx, w, 1.0)?);
        }
    }
    let mr = MaxregReport { runs };
    ctx.write_json("maxreg_report.json", "maxreg", &mr)?;
    let cac = caccioppoli(ctx)?;
    ctx.write_json("caccioppoli_report.json", "maxreg", &cac)?;
    Ok((mr, cac))
}

// -------------------------------------------------------------------- info

pub fn info(ctx: &Context) -> Result<String, CliError> {
    let sim = ctx.config.sim_unchecked()?;
    let mut s = format!(
        "filmlab {VERSION}\nrng scheme: {RNG_SCHEME}\nconfig hash: {}\n",
        ctx.config_hash()
    );
    s.push_str(&format!(
        "grid: n={} T={} dt0={} scheme={:?} paths={}\nnoise: {} modes over {} frequencies\n",
        sim.n,
        sim.t_final,
        sim.dt0,
        sim.scheme,
        sim.paths,
        sim.noise.len(),
        sim.noise.levels()
    ));
    match Model::new(&sim) {
        Ok(model) => {
            let dt = base_dt(&model)?;
            s.push_str(&format!(
                "intensity C={:.6e}\nbase step={dt:.6e}\n",
                model.intensity
            ));
        }
        Err(e) => s.push_str(&format!("model unavailable: {e}\n")),
    }
    Ok(s)
}

pub fn describe_blow_up(b: &BlowUp) -> String {
    format!(
        "t={:.6e} min_u={:.3e} h1={:.3e} reason={:?}",
        b.t, b.min_u, b.h1_norm, b.last_reason
    )
}
