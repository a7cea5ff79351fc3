//! Experiment configuration files and their content hash.
//!
//! A config is TOML or JSON (chosen by file extension, TOML otherwise). Flag
//! overrides are applied on top of the parsed file before validation. The
//! hash covers everything that determines results; thread count and output
//! settings are excluded so artifacts do not depend on them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::ClassifierConfig;
use crate::env::{EnvironmentLaw, LawSpec};
use crate::error::{Error, Result};
use crate::oracle::InstanceSpec;
use crate::presets;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Classify,
    Sweep,
    Oracle,
    Cep,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Classify => "classify",
            Command::Sweep => "sweep",
            Command::Oracle => "oracle",
            Command::Cep => "cep",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory receiving artifacts; nothing is written when absent.
    pub dir: Option<PathBuf>,
    pub format: Format,
}

/// One-parameter law families for sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// One cookie stepping `+3` w.p. `θ`, else `-1`; simple symmetric background.
    Theta,
    /// One cookie stepping `up` w.p. `θ`, else `down`; simple symmetric background.
    TwoPoint { up: i64, down: i64 },
}

impl FamilySpec {
    pub fn law(&self, parameter: f64, seed: u64) -> Result<EnvironmentLaw> {
        match *self {
            FamilySpec::Theta => presets::theta_family(parameter, seed),
            FamilySpec::TwoPoint { up, down } => {
                presets::first_visit_family(presets::two_point(parameter, up, down)?, seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub family: FamilySpec,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSpec {
    pub start: i64,
    /// Replica whose trajectory is written as CSV.
    pub trajectory_replica: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CepSpec {
    pub frontier: i64,
    pub lags: Vec<i64>,
    /// Step budget per replica.
    pub max_steps: u64,
}

impl Default for CepSpec {
    fn default() -> Self {
        Self {
            frontier: 10_000,
            lags: vec![1, 5, 20],
            max_steps: 1_000_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub instance: InstanceSpec,
    /// Monte Carlo replicas for cross-validation; none when absent or zero.
    #[serde(default)]
    pub validate_replicas: u64,
}

/// The thresholds of [`ClassifierConfig`] that are not run sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub confidence_z: f64,
    pub return_threshold: f64,
    pub recurrent_beta_upper: f64,
    pub stability_ratio: f64,
    pub ladder_replicas: u64,
    pub boundary_band: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        let c = ClassifierConfig::default();
        Self {
            confidence_z: c.confidence_z,
            return_threshold: c.return_threshold,
            recurrent_beta_upper: c.recurrent_beta_upper,
            stability_ratio: c.stability_ratio,
            ladder_replicas: c.ladder_replicas,
            boundary_band: c.boundary_band,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub command: Option<Command>,
    /// Master seed. Required: there is no clock-based default.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    /// Strictly increasing step horizons; the last one bounds every run.
    #[serde(default = "default_horizons")]
    pub horizons: Vec<u64>,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Law for `simulate`, `classify`, `cep` and `validate`. Its `seed` is
    /// replaced by the master seed.
    #[serde(default)]
    pub law: Option<LawSpec>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
    #[serde(default)]
    pub simulate: SimulateSpec,
    #[serde(default)]
    pub cep: CepSpec,
}

fn default_replicas() -> u64 {
    10_000
}

fn default_horizons() -> Vec<u64> {
    ClassifierConfig::default().horizons
}

impl ExperimentConfig {
    /// Parses TOML or, for a `.json` extension, JSON.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        } else {
            Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// JSON errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self, command: Command) -> Result<()> {
        if self.seed.is_none() {
            return Err(Error::Config("missing field `seed`".into()));
        }
        if self.replicas == 0 {
            return Err(Error::Config("`replicas` must be at least 1".into()));
        }
        if self.horizons.is_empty() || self.horizons[0] == 0 || self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("`horizons` must be positive and strictly increasing".into()));
        }
        let needs_law = matches!(command, Command::Simulate | Command::Classify | Command::Cep | Command::Validate);
        if needs_law && self.law.is_none() {
            return Err(Error::Config(format!("`{}` needs a [law] table", command.name())));
        }
        if command == Command::Sweep && self.sweep.is_none() {
            return Err(Error::Config("`sweep` needs a [sweep] table".into()));
        }
        if command == Command::Oracle && self.oracle.is_none() {
            return Err(Error::Config("`oracle` needs an [oracle] table".into()));
        }
        if command == Command::Cep {
            let c = &self.cep;
            if c.frontier < 2 || c.lags.iter().any(|&k| k < 0 || c.frontier / 2 + k > c.frontier) {
                return Err(Error::Config("`cep.lags` must lie in [0, frontier/2]".into()));
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    pub fn max_horizon(&self) -> u64 {
        *self.horizons.last().expect("validated")
    }

    /// The configured law under the master seed.
    pub fn build_law(&self) -> Result<EnvironmentLaw> {
        let mut spec = self.law.clone().ok_or_else(|| Error::Config("missing [law] table".into()))?;
        spec.seed = self.seed();
        EnvironmentLaw::from_spec(spec)
    }

    pub fn classifier(&self) -> ClassifierConfig {
        let t = &self.thresholds;
        ClassifierConfig {
            horizons: self.horizons.clone(),
            replicas: self.replicas,
            confidence_z: t.confidence_z,
            return_threshold: t.return_threshold,
            recurrent_beta_upper: t.recurrent_beta_upper,
            stability_ratio: t.stability_ratio,
            ladder_replicas: t.ladder_replicas,
            boundary_band: t.boundary_band,
        }
    }

    /// SHA-256 over the canonical JSON of the config without `threads`
    /// and `output`.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("serializable");
        if let Some(map) = value.as_object_mut() {
            map.remove("threads");
            map.remove("output");
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
