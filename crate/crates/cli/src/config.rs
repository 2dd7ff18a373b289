//! Experiment configuration: a JSON document validated against a fixed schema.

use std::collections::BTreeMap;
use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    EnvGen,
    Partition,
    Contacts,
    FreeEnergy,
    Sweep,
    RenewalCheck,
    TailFit,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::EnvGen => "env-gen",
            Command::Partition => "partition",
            Command::Contacts => "contacts",
            Command::FreeEnergy => "free-energy",
            Command::Sweep => "sweep",
            Command::RenewalCheck => "renewal-check",
            Command::TailFit => "tail-fit",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub enum ConstructionName {
    A,
    B,
}

/// Log-spaced grid of `points` values from `min` to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct HGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl HGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let (lo, hi) = (self.min.ln(), self.max.ln());
        (0..self.points)
            .map(|i| {
                if i == 0 {
                    self.min
                } else if i + 1 == self.points {
                    self.max
                } else {
                    (lo + (hi - lo) * i as f64 / (self.points - 1) as f64).exp()
                }
            })
            .collect()
    }
}

/// One experiment. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    /// Tail exponent of the polymer inter-arrival law; 1 is excluded.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Tail exponent of the disorder renewal, above 1.
    #[serde(default = "default_tilde_alpha")]
    pub tilde_alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_grid: Option<HGrid>,
    /// System size `N`, at most 65536.
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_window: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    /// Number of summed gaps in the big-jump convolution check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default = "default_construction")]
    pub construction: ConstructionName,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn default_alpha() -> f64 {
    1.5
}
fn default_tilde_alpha() -> f64 {
    1.5
}
fn default_beta() -> f64 {
    1.0
}
fn default_size() -> usize {
    1024
}
fn default_replicas() -> usize {
    8
}
fn default_construction() -> ConstructionName {
    ConstructionName::A
}

/// Tolerance names with their defaults.
pub const TOLERANCES: &[(&str, f64)] = &[
    ("oracle_abs", 1e-10),
    ("normalization_abs", 1e-9),
    ("geometric_rel", 0.05),
    ("homogeneous_abs", 1e-12),
    ("annealed_sigma", 2.0),
    ("monotone_sigma", 2.0),
    ("positivity_sigma", 3.0),
    ("exponent_band", 0.75),
    ("tail_slack", 0.5),
    ("tail_mass", 0.99),
    ("mean_scaling", 0.1),
    ("big_jump_rel", 0.15),
    ("big_jump_band", 0.2),
    ("bracket_fraction", 0.99),
    ("solver_residual", 1e-10),
];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: Self = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let key = unknown_field(&msg).unwrap_or_else(|| "config".into());
            CliError::config(key, msg)
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances.get(name).copied().unwrap_or_else(|| {
            TOLERANCES
                .iter()
                .find(|(n, _)| *n == name)
                .map(|&(_, v)| v)
                .expect("known tolerance name")
        })
    }

    pub fn h_or(&self, default: f64) -> f64 {
        self.h.unwrap_or(default)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(CliError::config("alpha", "must be a positive finite number"));
        }
        if self.alpha == 1.0 {
            return Err(CliError::config(
                "alpha",
                "alpha = 1 is excluded: the inter-arrival exponent must differ from 1",
            ));
        }
        if !self.tilde_alpha.is_finite() || self.tilde_alpha <= 1.0 {
            return Err(CliError::config("tilde_alpha", "must be a finite number above 1"));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(CliError::config("beta", "must be finite and non-negative"));
        }
        if let Some(h) = self.h {
            if !h.is_finite() {
                return Err(CliError::config("h", "must be finite"));
            }
        }
        if self.size == 0 {
            return Err(CliError::config("size", "must be at least 1"));
        }
        if self.size > pinlab::MAX_EXACT_SIZE {
            return Err(CliError::config(
                "size",
                format!("exceeds the exact DP limit {}", pinlab::MAX_EXACT_SIZE),
            ));
        }
        if self.replicas == 0 {
            return Err(CliError::config("replicas", "must be at least 1"));
        }
        if let Some(g) = self.h_grid {
            if !(g.min > 0.0 && g.min.is_finite() && g.max.is_finite() && g.max > g.min) {
                return Err(CliError::config("h_grid", "needs 0 < min < max, both finite"));
            }
            if g.points < 4 {
                return Err(CliError::config("h_grid", "needs at least 4 points"));
            }
        }
        if self.command == Command::Sweep && self.h_grid.is_none() {
            return Err(CliError::config("h_grid", "required by the sweep command"));
        }
        if let Some(cap) = self.a_max {
            if cap > self.size {
                return Err(CliError::config("a_max", "must not exceed size"));
            }
        }
        if let Some([lo, hi]) = self.a_window {
            if lo < 1 || lo >= hi {
                return Err(CliError::config("a_window", "needs 1 <= lo < hi"));
            }
        }
        if let Some([lo, hi]) = self.fit_window {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(CliError::config("fit_window", "needs 0 < lo < hi"));
            }
        }
        if self.steps == Some(0) {
            return Err(CliError::config("steps", "must be at least 1"));
        }
        for (name, &value) in &self.tolerances {
            if !TOLERANCES.iter().any(|(n, _)| n == name) {
                return Err(CliError::config(
                    format!("tolerances.{name}"),
                    "unknown tolerance name",
                ));
            }
            if !(value > 0.0 && value.is_finite()) {
                return Err(CliError::config(
                    format!("tolerances.{name}"),
                    "tolerances must be positive and finite",
                ));
            }
        }
        Ok(())
    }
}

fn unknown_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

/// JSON schema of [`ExperimentConfig`], as published in `schema/config.schema.json`.
pub fn schema_json() -> String {
    let schema = schemars::schema_for!(ExperimentConfig);
    let mut text = serde_json::to_string_pretty(&schema).expect("schema serializes");
    text.push('\n');
    text
}
