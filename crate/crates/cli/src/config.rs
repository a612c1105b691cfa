//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use absorber_core::dsp::LoopConfig;
use absorber_core::grid;
use absorber_core::synthesis::{ControlSpecJson, ResonatorJson};
use absorber_core::vkundt::WaveguideGeometry;
use absorber_core::{DriverModel, FeedbackSpec, ParameterEstimates, TargetSpec};
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub model: ModelRef,
    pub control: ControlSpecJson,
    /// estimate-to-truth ratios used by the controller
    #[serde(default)]
    pub estimates: EstimateErrors,
    #[serde(default)]
    pub montecarlo: MonteCarloSection,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub kundt: KundtSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// Either `"reference"` or an inline model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Named(String),
    Inline(DriverModel),
}

impl Default for ModelRef {
    fn default() -> Self {
        ModelRef::Named("reference".into())
    }
}

impl ModelRef {
    pub fn resolve(&self) -> anyhow::Result<DriverModel> {
        match self {
            ModelRef::Named(n) if n == "reference" => Ok(DriverModel::reference()),
            ModelRef::Named(n) => bail!("unknown model reference `{n}`"),
            ModelRef::Inline(m) => Ok(*m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateErrors {
    pub rss: f64,
    pub f0: f64,
    pub qms: f64,
    pub f: f64,
    pub csb: f64,
}

impl Default for EstimateErrors {
    fn default() -> Self {
        Self { rss: 1.0, f0: 1.0, qms: 1.0, f: 1.0, csb: 1.0 }
    }
}

impl EstimateErrors {
    pub fn apply(&self, truth: &DriverModel) -> ParameterEstimates {
        ParameterEstimates::exact(truth).scaled([self.rss, self.f0, self.qms, self.f, self.csb])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub n_draws: usize,
    pub rel_std: f64,
    pub seed: u64,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self { n_draws: 100_000, rel_std: 0.05, seed: 0 }
    }
}

/// Linear grid `lo, lo + step, ..., hi`, optionally with extra points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub step_hz: f64,
    pub extra_hz: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { lo_hz: 10.0, hi_hz: 1000.0, step_hz: 2.0, extra_hz: Vec::new() }
    }
}

impl GridSpec {
    pub fn points(&self) -> anyhow::Result<Vec<f64>> {
        if !(self.lo_hz > 0.0 && self.hi_hz >= self.lo_hz && self.step_hz > 0.0) {
            bail!("grid needs 0 < lo_hz <= hi_hz and step_hz > 0");
        }
        if (self.hi_hz - self.lo_hz) / self.step_hz > 1e7 {
            bail!("grid has too many points");
        }
        let mut g = grid::stepped(self.lo_hz, self.hi_hz, self.step_hz);
        for &f in &self.extra_hz {
            if !(f > 0.0 && f.is_finite()) {
                bail!("extra grid point {f} is not a positive frequency");
            }
            g = grid::with_point(g, f);
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KundtSection {
    pub geometry: WaveguideGeometry,
    /// relative H12 noise, 0 for noiseless
    pub noise_rel: f64,
    pub seed: u64,
}

impl Default for KundtSection {
    fn default() -> Self {
        Self { geometry: WaveguideGeometry::reference(), noise_rel: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub freqs_hz: Vec<f64>,
    /// run without any control current
    pub passive: bool,
    #[serde(rename = "loop")]
    pub loop_cfg: LoopConfig,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { freqs_hz: vec![100.0, 205.5, 400.0], passive: false, loop_cfg: LoopConfig::default() }
    }
}

/// Everything a command needs, resolved and validated.
pub struct Resolved {
    pub model: DriverModel,
    pub target: TargetSpec,
    pub feedback: FeedbackSpec,
    pub estimates: ParameterEstimates,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(ConfigError::from)?;
        if cfg.version != CONFIG_VERSION {
            return Err(ConfigError(format!("unsupported config version {}", cfg.version)).into());
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self) -> anyhow::Result<Resolved> {
        let model = self.model.resolve()?;
        let (target, feedback) = self.control.to_specs(&model.air)?;
        let estimates = self.estimates.apply(&model);
        estimates.validate()?;
        Ok(Resolved { model, target, feedback, estimates })
    }

    /// The three designs used throughout, as configs on the reference model.
    pub fn table1(name: &str) -> Option<Self> {
        let res = |f_hz, q| ResonatorJson { rst_norm: 1.0, f_hz, q };
        let resonators = match name {
            "1dof" => vec![res(400.0, 7.0)],
            "broadband" => vec![res(200.0, 0.25)],
            "2dof" => vec![res(100.0, 7.0), res(400.0, 7.0)],
            _ => return None,
        };
        Some(Self {
            version: CONFIG_VERSION,
            name: Some(name.into()),
            model: ModelRef::default(),
            control: ControlSpecJson { resonators, kg: 4.0, fg_hz: 500.0 },
            estimates: EstimateErrors { f: 0.95, ..EstimateErrors::default() },
            montecarlo: MonteCarloSection::default(),
            grid: GridSpec { extra_hz: vec![205.5], ..GridSpec::default() },
            kundt: KundtSection::default(),
            simulate: SimulateSection::default(),
            out_dir: None,
        })
    }
}

/// Malformed or inconsistent configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<serde_json::Error> for ConfigError {
    fn from(e: serde_json::Error) -> Self {
        ConfigError(e.to_string())
    }
}
