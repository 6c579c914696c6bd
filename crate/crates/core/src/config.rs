//! Scenario configuration: a single JSON document, with the in-repo presets
//! and the config hash that stamps every output file.

use crate::caustic::FanSpec;
use crate::eikonal::BundleSpec;
use crate::metric::{self, MetricError, MetricParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown preset '{0}' (available: subextremal, extremal, naked, remark31)")]
    UnknownPreset(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub rho0: f64,
    #[serde(default)]
    pub phi0: f64,
    pub xi0: f64,
    pub xi_phi: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub ode_rel: f64,
    pub ode_abs: f64,
    pub event: f64,
    pub fit: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { ode_rel: 1e-12, ode_abs: 1e-14, event: 1e-10, fit: 1e-6 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub dir: String,
    pub formats: Vec<String>,
}

impl Default for Outputs {
    fn default() -> Self {
        Self { dir: "out".into(), formats: vec!["csv".into(), "json".into(), "svg".into()] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub m: f64,
    pub e: f64,
    pub initial: InitialSpec,
    #[serde(default)]
    pub bundle: Option<BundleSpec>,
    #[serde(default = "default_k_list")]
    pub k_list: Vec<f64>,
    pub x0_max: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub outputs: Outputs,
    /// Caustic fan; defaults to the canonical fan at the initial momenta.
    #[serde(default)]
    pub fan: Option<FanSpec>,
    #[serde(default = "default_band_eps")]
    pub band_eps: f64,
    /// Frequency at which the band-edge mismatch bound is enforced.
    #[serde(default = "default_k_check")]
    pub k_check: f64,
}

fn default_k_list() -> Vec<f64> {
    vec![100.0, 200.0, 400.0, 800.0]
}
fn default_band_eps() -> f64 {
    0.7
}
fn default_k_check() -> f64 {
    400.0
}

pub const PRESET_NAMES: [&str; 4] = ["subextremal", "extremal", "naked", "remark31"];

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let text = match name {
            "subextremal" => include_str!("../../../presets/subextremal.json"),
            "extremal" => include_str!("../../../presets/extremal.json"),
            "naked" => include_str!("../../../presets/naked.json"),
            "remark31" => include_str!("../../../presets/remark31.json"),
            other => return Err(ConfigError::UnknownPreset(other.into())),
        };
        Self::from_json(text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.m <= 0.0 {
            return Err(ConfigError::Invalid(format!("m must be positive, got {}", self.m)));
        }
        if self.initial.rho0 <= 0.0 {
            return Err(ConfigError::Invalid(format!(
                "initial.rho0 must be positive, got {}",
                self.initial.rho0
            )));
        }
        if self.x0_max <= 0.0 {
            return Err(ConfigError::Invalid(format!(
                "x0_max must be positive, got {}",
                self.x0_max
            )));
        }
        if self.k_list.is_empty() || self.k_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::Invalid(
                "k_list must be non-empty and sorted strictly ascending".into(),
            ));
        }
        if self.k_list[0] <= 0.0 {
            return Err(ConfigError::Invalid("k_list entries must be positive".into()));
        }
        if self.band_eps <= 0.0 {
            return Err(ConfigError::Invalid(format!(
                "band_eps must be positive, got {}",
                self.band_eps
            )));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<MetricParams, ConfigError> {
        Ok(metric::classify(self.m, self.e)?)
    }

    pub fn fan_spec(&self) -> FanSpec {
        self.fan
            .unwrap_or_else(|| FanSpec::canonical(self.initial.xi0, self.initial.xi_phi))
    }

    /// Hash of the canonical (re-serialized) config; stamps every output.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(16);
        for b in &digest[..8] {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_hash_deterministically() {
        for name in PRESET_NAMES {
            let a = ScenarioConfig::preset(name).unwrap();
            let b = ScenarioConfig::preset(name).unwrap();
            assert_eq!(a.hash(), b.hash(), "preset {name}");
            assert_eq!(a.hash().len(), 16);
        }
        assert!(matches!(
            ScenarioConfig::preset("bogus"),
            Err(ConfigError::UnknownPreset(_))
        ));
    }

    #[test]
    fn missing_field_names_the_path() {
        let err = ScenarioConfig::from_json(r#"{"m": 1.0, "e": 0.6, "x0_max": 1.0}"#)
            .unwrap_err();
        assert!(err.to_string().contains("initial"), "{err}");
    }

    #[test]
    fn unsorted_k_list_rejected() {
        let text = r#"{
            "m": 1.0, "e": 0.6, "x0_max": 1.0,
            "initial": {"rho0": 3.0, "xi0": 1.0, "xi_phi": 1.0},
            "k_list": [400.0, 100.0]
        }"#;
        assert!(matches!(
            ScenarioConfig::from_json(text),
            Err(ConfigError::Invalid(_))
        ));
    }
}
