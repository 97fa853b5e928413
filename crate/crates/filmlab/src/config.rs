//! TOML experiment description.
//!
//! Every table is optional; a missing key takes the prototype value (see
//! `configs/prototype.toml`). Unknown keys are rejected.

use filmlab_core::coefficients::{CutoffSpec, MobilitySpec, PotentialSpec};
use filmlab_core::functionals::{gamma_range, Diagnostics};
use filmlab_core::maxreg::{CaccioppoliSetup, MrSetup, WeightSpec};
use filmlab_core::noise::{build_trig_basis, NoiseBasis, Parity};
use filmlab_core::solver::{InitialCondition, Scheme, SimConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub mobility: MobilitySpec,
    pub potential: PotentialConfig,
    pub noise: NoiseConfig,
    pub scheme: SchemeConfig,
    pub diagnostics: DiagnosticsConfig,
    pub adaptivity: AdaptivityConfig,
    pub output: OutputConfig,
    pub assumptions: AssumptionsConfig,
    pub maxreg: MaxregConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: GridConfig::default(),
            time: TimeConfig::default(),
            mobility: MobilitySpec::power_law(2.0),
            potential: PotentialConfig::LennardJonesType {
                theta: 8.0,
                c_theta: 1.0,
            },
            noise: NoiseConfig::default(),
            scheme: SchemeConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            adaptivity: AdaptivityConfig::default(),
            output: OutputConfig::default(),
            assumptions: AssumptionsConfig::default(),
            maxreg: MaxregConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub initial: InitialCondition,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 128,
            initial: InitialCondition::Harmonic {
                mean: 1.0,
                amplitude: 0.3,
                k: 1,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub dt0: f64,
    pub dt_min: f64,
    pub t_final: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            dt0: 1e-5,
            dt_min: 1e-14,
            t_final: 0.05,
        }
    }
}

/// `kind = "none"` switches the potential off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    None,
    LennardJonesType { theta: f64, c_theta: f64 },
    PurePower { theta: f64 },
}

impl PotentialConfig {
    pub fn spec(&self) -> Option<PotentialSpec> {
        match *self {
            PotentialConfig::None => None,
            PotentialConfig::LennardJonesType { theta, c_theta } => {
                Some(PotentialSpec::LennardJonesType { theta, c_theta })
            }
            PotentialConfig::PurePower { theta } => Some(PotentialSpec::PurePower { theta }),
        }
    }
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig::LennardJonesType {
            theta: 8.0,
            c_theta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmitMode {
    pub k: u32,
    pub parity: Parity,
}

/// `levels = 0` turns the noise off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub levels: u32,
    pub decay: f64,
    pub amplitude: f64,
    pub omit: Vec<OmitMode>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            decay: 3.0,
            amplitude: 0.5,
            omit: Vec::new(),
        }
    }
}

impl NoiseConfig {
    pub fn basis(&self) -> filmlab_core::Result<NoiseBasis> {
        if self.levels == 0 {
            return Ok(NoiseBasis::empty());
        }
        let mut basis = build_trig_basis(self.levels, self.decay, self.amplitude)?;
        for m in &self.omit {
            basis = basis.without(m.k, m.parity);
        }
        Ok(basis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: Scheme,
    pub ito_correction: f64,
    /// Cutoff level `j`; absent means no regularization.
    pub cutoff: Option<u32>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            kind: Scheme::Ito,
            ito_correction: 0.0,
            cutoff: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Defaults to `max(0, ν - 5) + 0.01`.
    pub beta: Option<f64>,
    /// Defaults to the centre of the admissible interval for `beta`.
    pub gamma: Option<f64>,
    pub output_stride: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            beta: None,
            gamma: None,
            output_stride: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptivityConfig {
    pub pos_floor: f64,
    pub drop_ratio: f64,
    pub h1_max: f64,
}

impl Default for AdaptivityConfig {
    fn default() -> Self {
        Self {
            pos_floor: 1e-7,
            drop_ratio: 0.5,
            h1_max: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub paths: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { paths: 1 }
    }
}

/// Solution-space parameters `(p, κ, s, q)` checked by `validate`; the
/// dimension is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssumptionsConfig {
    pub p: f64,
    pub kappa: f64,
    pub s: f64,
    pub q: f64,
}

impl Default for AssumptionsConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            kappa: 0.0,
            s: 1.0,
            q: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxregConfig {
    pub lambda: f64,
    pub trials: usize,
    pub pieces: usize,
    pub k_modes: usize,
    pub t_final: f64,
    pub n_t: usize,
    pub p: f64,
    pub q: f64,
    pub kappas: Vec<f64>,
    /// Also run every weight with `λ = 1`.
    pub control: bool,
    pub caccioppoli: CaccioppoliConfig,
}

impl Default for MaxregConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            trials: 100,
            pieces: 16,
            k_modes: 32,
            t_final: 1.0,
            n_t: 512,
            p: 4.0,
            q: 2.0,
            kappas: vec![0.0, 0.9],
            control: true,
            caccioppoli: CaccioppoliConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaccioppoliConfig {
    pub lambda: f64,
    pub trials: usize,
    pub pieces: usize,
    pub k_modes: usize,
    pub cubes_per_scale: usize,
    pub scales: Vec<f64>,
}

impl Default for CaccioppoliConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            trials: 50,
            pieces: 16,
            k_modes: 32,
            cubes_per_scale: 16,
            scales: vec![1e-4, 4e-4, 1.6e-3],
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn parse(doc: &str) -> Result<Self, CliError> {
        toml::from_str(doc).map_err(config_err)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let doc = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&doc)
    }

    /// Solver configuration, structurally validated.
    pub fn sim(&self) -> Result<SimConfig, CliError> {
        let cfg = self.sim_unchecked()?;
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    /// Solver configuration without the structural checks.
    pub fn sim_unchecked(&self) -> Result<SimConfig, CliError> {
        let beta = self
            .diagnostics
            .beta
            .unwrap_or_else(|| Diagnostics::default_beta(&self.mobility));
        // an inadmissible beta surfaces in `SimConfig::validate`
        let gamma = self
            .diagnostics
            .gamma
            .unwrap_or_else(|| gamma_range(beta).map_or(f64::NAN, |(lo, hi)| 0.5 * (lo + hi)));
        let cutoff = self
            .scheme
            .cutoff
            .map(CutoffSpec::new)
            .transpose()
            .map_err(config_err)?;
        Ok(SimConfig {
            n: self.grid.n,
            dt0: self.time.dt0,
            dt_min: self.time.dt_min,
            t_final: self.time.t_final,
            scheme: self.scheme.kind,
            mobility: self.mobility.clone(),
            potential: self.potential.spec(),
            noise: self.noise.basis().map_err(config_err)?,
            cutoff,
            initial: self.grid.initial.clone(),
            pos_floor: self.adaptivity.pos_floor,
            drop_ratio: self.adaptivity.drop_ratio,
            h1_max: self.adaptivity.h1_max,
            output_stride: self.diagnostics.output_stride,
            seed: self.seed,
            paths: self.output.paths,
            beta_diag: beta,
            gamma_diag: gamma,
            ito_correction: self.scheme.ito_correction,
        })
    }

    /// One validated weight per entry of `kappas`.
    pub fn weights(&self) -> Result<Vec<WeightSpec>, CliError> {
        let m = &self.maxreg;
        if m.kappas.is_empty() {
            return Err(CliError::Config("maxreg.kappas must not be empty".into()));
        }
        m.kappas
            .iter()
            .map(|&k| WeightSpec::new(k, m.p, m.q).map_err(config_err))
            .collect()
    }

    pub fn mr_setup(&self, weight: WeightSpec, lambda: f64) -> Result<MrSetup, CliError> {
        let m = &self.maxreg;
        if m.trials == 0 || m.pieces == 0 || m.k_modes == 0 || !m.n_t.is_multiple_of(m.pieces) {
            return Err(CliError::Config(
                "maxreg needs trials, pieces, k_modes >= 1 and pieces dividing n_t".into(),
            ));
        }
        if !(lambda >= 1.0) || !(m.t_final > 0.0) {
            return Err(CliError::Config(format!(
                "maxreg needs lambda >= 1 and t_final > 0, got {lambda}, {}",
                m.t_final
            )));
        }
        Ok(MrSetup {
            lambda,
            trials: m.trials,
            weight,
            t_final: m.t_final,
            k_modes: m.k_modes,
            pieces: m.pieces,
            n_t: m.n_t,
            seed: self.seed,
        })
    }

    pub fn caccioppoli_setup(&self) -> Result<(CaccioppoliSetup, Vec<f64>), CliError> {
        let c = &self.maxreg.caccioppoli;
        if c.trials == 0
            || c.pieces == 0
            || c.k_modes == 0
            || c.cubes_per_scale == 0
            || c.scales.is_empty()
        {
            return Err(CliError::Config(
                "caccioppoli needs trials, pieces, k_modes, cubes_per_scale >= 1 and scales".into(),
            ));
        }
        if !(c.lambda >= 1.0) || c.scales.iter().any(|r| !(*r > 0.0)) {
            return Err(CliError::Config(
                "caccioppoli needs lambda >= 1 and positive scales".into(),
            ));
        }
        let setup = CaccioppoliSetup {
            lambda: c.lambda,
            trials: c.trials,
            k_modes: c.k_modes,
            pieces: c.pieces,
            cubes_per_scale: c.cubes_per_scale,
            seed: self.seed,
        };
        Ok((setup, c.scales.clone()))
    }

    /// Canonical JSON rendering; the config hash is taken over this text.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_prototype() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg.sim().unwrap(), SimConfig::prototype());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse("[grid]\nn = 64\nm = 3\n").is_err());
        assert!(ExperimentConfig::parse("bogus = 1\n").is_err());
        assert!(ExperimentConfig::parse(
            "[potential]\nkind = \"pure_power\"\ntheta = 4\nc_theta = 1\n"
        )
        .is_err());
    }

    #[test]
    fn tables_round_trip() {
        let doc = r#"
seed = 9
[grid]
n = 64
initial = { kind = "constant", value = 1.5 }
[mobility]
kind = "mixed_powers"
terms = [[1.0, 3.0], [0.5, 2.0]]
[potential]
kind = "none"
[noise]
levels = 2
omit = [{ k = 2, parity = "sin" }]
[scheme]
kind = "ito"
cutoff = 3
"#;
        let cfg = ExperimentConfig::parse(doc).unwrap();
        let sim = cfg.sim().unwrap();
        assert_eq!(sim.n, 64);
        assert_eq!(sim.seed, 9);
        assert!(sim.potential.is_none());
        assert_eq!(sim.noise.len(), 3);
        assert_eq!(sim.cutoff, Some(CutoffSpec { j: 3 }));
        let back: ExperimentConfig = serde_json::from_str(&cfg.canonical()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn weight_range_is_enforced() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.weights().unwrap().len(), 2);
        cfg.maxreg.kappas = vec![1.0];
        assert!(cfg.weights().is_err());
    }
}
