//! Experiment configuration: a sectioned TOML file with CLI overrides.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cavity::LossModel;
use crate::decoder::{DecoderKind, ErasureTimeEdge};
use crate::network::StructureKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn default_gamma() -> f64 {
    1.0
}
fn default_window() -> f64 {
    crate::cavity::DEFAULT_WINDOW_FACTOR
}
fn default_t2() -> f64 {
    f64::INFINITY
}
fn default_distances() -> Vec<usize> {
    vec![3, 5, 7]
}
fn default_alpha() -> f64 {
    10.0
}
fn default_shots() -> u64 {
    10_000
}
fn default_seed() -> u64 {
    1
}
fn default_out() -> String {
    "out".into()
}
fn default_g_range() -> (f64, f64) {
    (2.0, 500.0)
}
fn default_iterations() -> usize {
    6
}
fn default_d_low() -> usize {
    3
}
fn default_kappa_in_grid() -> Vec<f64> {
    vec![0.01, 0.1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub g: f64,
    pub kappa_in: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub loss_model: LossModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    pub window_factor: f64,
    /// Pin the pulse length instead of optimizing it.
    pub pulse_length: Option<f64>,
    /// Pin the external coupling instead of optimizing it.
    pub kappa_ex: Option<f64>,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self { window_factor: default_window(), pulse_length: None, kappa_ex: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// Dephasing time in units of 1/gamma; infinite when omitted.
    pub t2: f64,
    pub p_sw: f64,
    pub p_cir: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { t2: default_t2(), p_sw: 0.0, p_cir: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodeSection {
    pub distances: Vec<usize>,
    /// Noisy cycles per shot; 0 means "equal to the distance".
    pub cycles: usize,
}

impl Default for CodeSection {
    fn default() -> Self {
        Self { distances: default_distances(), cycles: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructureSection {
    #[serde(with = "structure_kind_compact")]
    pub kind: StructureKind,
    pub round_latency: f64,
}

impl Default for StructureSection {
    fn default() -> Self {
        Self { kind: StructureKind::NCavity, round_latency: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderSection {
    pub kind: DecoderKind,
    pub alpha: f64,
    pub erasure_time_edge: ErasureTimeEdge,
}

impl Default for DecoderSection {
    fn default() -> Self {
        Self {
            kind: DecoderKind::Uniform,
            alpha: default_alpha(),
            erasure_time_edge: ErasureTimeEdge::Free,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub shots: u64,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    pub out: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { shots: default_shots(), seed: default_seed(), threads: 0, out: default_out() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundarySection {
    pub kappa_in_grid: Vec<f64>,
    pub g_range: (f64, f64),
    pub iterations: usize,
    pub d_low: usize,
}

impl Default for BoundarySection {
    fn default() -> Self {
        Self {
            kappa_in_grid: default_kappa_in_grid(),
            g_range: default_g_range(),
            iterations: default_iterations(),
            d_low: default_d_low(),
        }
    }
}

/// Synthetic-noise mode: sweep a total per-path photon loss rate and a flat
/// gate infidelity, bypassing the cavity physics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    /// Total loss probability per weight-4 measurement path.
    pub loss: f64,
    /// Gate infidelity mapped to a flat delay-channel strength.
    pub infidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cavity: CavitySection,
    #[serde(default)]
    pub pulse: PulseSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub code: CodeSection,
    #[serde(default)]
    pub structure: StructureSection,
    #[serde(default)]
    pub decoder: DecoderSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub boundary: BoundarySection,
    #[serde(default)]
    pub synthetic: Option<SyntheticSection>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.code.distances.is_empty() {
            return Err(ConfigError::Invalid("code.distances must not be empty".into()));
        }
        for &d in &self.code.distances {
            if d < 2 {
                return Err(ConfigError::Invalid(format!("distance {d} < 2")));
            }
        }
        if self.run.shots < 1 {
            return Err(ConfigError::Invalid("run.shots must be >= 1".into()));
        }
        if !(self.cavity.g > 0.0 && self.cavity.gamma > 0.0 && self.cavity.kappa_in >= 0.0) {
            return Err(ConfigError::Invalid("cavity rates out of range".into()));
        }
        if self.decoder.alpha <= 1.0 {
            return Err(ConfigError::Invalid("decoder.alpha must exceed 1".into()));
        }
        if let Some(s) = &self.synthetic {
            if !(0.0..=1.0).contains(&s.loss) || !(0.0..0.5).contains(&s.infidelity) {
                return Err(ConfigError::Invalid("synthetic section out of range".into()));
            }
        }
        Ok(())
    }

    /// Reference configuration used in examples and tests.
    pub fn example() -> Self {
        Self::from_toml_str(EXAMPLE_TOML).expect("example config parses")
    }
}

/// Parse/format `StructureKind` as the compact CLI spelling `4 | d | n`.
mod structure_kind_compact {
    use super::StructureKind;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(kind: &StructureKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match kind {
            StructureKind::FourCavity => "4",
            StructureKind::DCavity => "d",
            StructureKind::NCavity => "n",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<StructureKind, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for StructureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "4" | "four" | "four_cavity" => Ok(StructureKind::FourCavity),
            "d" | "d_cavity" => Ok(StructureKind::DCavity),
            "n" | "n_cavity" => Ok(StructureKind::NCavity),
            other => Err(format!("unknown structure '{other}' (expected 4 | d | n)")),
        }
    }
}

impl FromStr for DecoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(DecoderKind::Uniform),
            "weighted" => Ok(DecoderKind::Weighted),
            other => Err(format!("unknown decoder '{other}' (expected uniform | weighted)")),
        }
    }
}

pub const EXAMPLE_TOML: &str = r#"[cavity]
g = 50.12
kappa_in = 0.01
loss_model = "state_averaged"

[pulse]
window_factor = 6.0

[noise]
t2 = 1e6
p_sw = 0.0
p_cir = 0.0

[code]
distances = [3, 5, 7]

[structure]
kind = "n"

[decoder]
kind = "weighted"
alpha = 10.0

[run]
shots = 10000
seed = 1
out = "out"

[boundary]
kappa_in_grid = [0.01, 0.1]
g_range = [2.0, 500.0]
iterations = 6
d_low = 3
"#;
