//! One config file for the whole toolkit: loss weights, loop knobs,
//! generator sizes, and backend settings.
//!
//! The file is TOML; unknown keys are rejected with the offending path. The
//! defaults are the reference constants (η = 15, generation temperature 0.3,
//! α_precond = α_effect = 1.0, α_goal = 1.5, λ = 0.1, β = 2.0, α = 0.5).
//! Environment variables override only backend credentials: `MODEL_API_URL`
//! for the endpoint and `MODEL_API_KEY` for the key.

use crate::datagen::LabelMix;
use crate::losses::LossWeights;
use crate::orchestrator::LoopConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config at `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

/// Instance-generator sizes and dataset knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub blocks: usize,
    pub cities: usize,
    pub locations_per_city: usize,
    pub packages: usize,
    pub trucks: usize,
    pub airplanes: usize,
    /// Phase-1 records to generate.
    pub count: usize,
    pub mix: LabelMix,
    /// D1 / D2 / D_test ratios; must sum to 1.
    pub split: [f64; 3],
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            blocks: 3,
            cities: 2,
            locations_per_city: 2,
            packages: 1,
            trucks: 2,
            airplanes: 1,
            count: 40,
            mix: LabelMix::default(),
            split: [0.6, 0.2, 0.2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

/// Model-backend selection and credentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    /// Bearer token; prefer the `MODEL_API_KEY` environment variable.
    pub api_key: Option<String>,
    /// Completion script for the scripted backend (JSON file).
    pub script_path: Option<PathBuf>,
    /// Returned by the scripted backend on missing keys.
    pub default_completion: String,
    /// Optional endpoint notified with dataset manifests each iteration.
    pub trainer_hook_url: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Http,
            endpoint: "http://localhost:8000/v1/chat/completions".to_string(),
            model: "local-model".to_string(),
            api_key: None,
            script_path: None,
            default_completion: String::new(),
            trainer_hook_url: None,
        }
    }
}

/// The whole run configuration; every section has defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub weights: LossWeights,
    #[serde(rename = "loop")]
    pub loop_cfg: LoopConfig,
    pub generator: GeneratorConfig,
    pub backend: BackendConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.weights
            .validate()
            .map_err(|m| invalid("weights", m))?;
        self.loop_cfg.validate().map_err(|m| invalid("loop", m))?;
        let g = &self.generator;
        if g.blocks < 1 {
            return Err(invalid("generator.blocks", "must be at least 1"));
        }
        for (field, v) in [
            ("generator.cities", g.cities),
            ("generator.locations_per_city", g.locations_per_city),
            ("generator.packages", g.packages),
            ("generator.trucks", g.trucks),
            ("generator.airplanes", g.airplanes),
        ] {
            if v < 1 {
                return Err(ConfigError::Invalid {
                    field,
                    message: "must be at least 1".into(),
                });
            }
        }
        g.mix
            .validate()
            .map_err(|e| invalid("generator.mix", e.to_string()))?;
        if g.split.iter().any(|&r| r <= 0.0) {
            return Err(invalid("generator.split", "ratios must be positive"));
        }
        let sum: f64 = g.split.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(
                "generator.split",
                format!("ratios sum to {sum}, expected 1"),
            ));
        }
        Ok(())
    }

    /// Applies the credential environment overrides.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var("MODEL_API_URL") {
            if !url.is_empty() {
                self.backend.endpoint = url;
            }
        }
        if let Ok(key) = std::env::var("MODEL_API_KEY") {
            if !key.is_empty() {
                self.backend.api_key = Some(key);
            }
        }
    }
}

/// Loads and validates a config; `None` yields the defaults. Environment
/// credential overrides are applied in both cases.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, ConfigError> {
    let mut cfg = match path {
        None => RunConfig::default(),
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?)?,
    };
    cfg.apply_env();
    cfg.validate()?;
    Ok(cfg)
}
