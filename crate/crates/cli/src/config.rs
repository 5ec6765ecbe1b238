//! Experiment configuration: TOML on disk, validated into run parameters.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ermab::domains::DOMAIN_NAMES;
use ermab::{PolicyKind, DEFAULT_PRECISION};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// When allocation policies recompute group budgets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Realloc {
    #[default]
    EveryRound,
    Once,
}

impl Realloc {
    pub fn every_round(self) -> bool {
        self == Realloc::EveryRound
    }
}

impl fmt::Display for Realloc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Realloc::EveryRound => "every-round",
            Realloc::Once => "once",
        })
    }
}

impl FromStr for Realloc {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "every-round" => Ok(Realloc::EveryRound),
            "once" => Ok(Realloc::Once),
            other => Err(format!("expected every-round or once, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaternalOptions {
    #[serde(default = "default_large_group")]
    pub large_group: usize,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
}

fn default_large_group() -> usize {
    2
}

fn default_noise_scale() -> f64 {
    0.2
}

impl Default for MaternalOptions {
    fn default() -> Self {
        Self {
            large_group: default_large_group(),
            noise_scale: default_noise_scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiabetesOptions {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// CSV group table; the bundled table is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_table: Option<PathBuf>,
}

fn default_alpha() -> f64 {
    0.5
}

impl Default for DiabetesOptions {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            group_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoOptions {
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityOptions {
    /// Ascending budget sweep.
    pub budgets: Vec<usize>,
    /// Mean per-arm reward in the last round that counts as meeting capacity.
    pub target: f64,
}

fn default_seeds() -> usize {
    1
}

fn default_precision() -> f64 {
    DEFAULT_PRECISION
}

/// One experiment as written in a config file.
///
/// `n_arms`, `budget` and `horizon` default to the domain's standard setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_arms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub policies: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_precision")]
    pub precision: f64,
    #[serde(default)]
    pub realloc: Realloc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maternal: Option<MaternalOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diabetes: Option<DiabetesOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pareto: Option<ParetoOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<CapacityOptions>,
}

/// Standard `(n_arms, budget, horizon)` per domain.
pub fn domain_defaults(domain: &str) -> Option<(usize, usize, usize)> {
    match domain {
        "synthetic" => Some((100, 20, 20)),
        "maternal" => Some((200, 60, 20)),
        "diabetes" => Some((300, 75, 20)),
        _ => None,
    }
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses TOML text. Relative paths inside stay as written.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::ConfigSyntax(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::ConfigSyntax(e.to_string()))
    }

    /// Reads a TOML config, or the `config` echo of a `manifest.json`.
    /// Relative group-table paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Echo {
                config: ExperimentConfig,
            }
            serde_json::from_str::<Echo>(&text)
                .map_err(|e| CliError::ConfigSyntax(e.to_string()))?
                .config
        } else {
            Self::from_toml(&text)?
        };
        if let Some(table) = config
            .diabetes
            .as_mut()
            .and_then(|d| d.group_table.as_mut())
        {
            if table.is_relative() {
                if let Some(dir) = path.parent() {
                    *table = dir.join(&*table);
                }
            }
        }
        Ok(config)
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
            .or_else(|| domain_defaults(&self.domain).map(|d| d.0))
            .unwrap_or(0)
    }

    pub fn budget(&self) -> usize {
        self.budget
            .or_else(|| domain_defaults(&self.domain).map(|d| d.1))
            .unwrap_or(0)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
            .or_else(|| domain_defaults(&self.domain).map(|d| d.2))
            .unwrap_or(0)
    }

    pub fn maternal_options(&self) -> MaternalOptions {
        self.maternal.clone().unwrap_or_default()
    }

    pub fn diabetes_options(&self) -> DiabetesOptions {
        self.diabetes.clone().unwrap_or_default()
    }

    /// Seeds `base_seed .. base_seed + seeds`.
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.base_seed + i).collect()
    }

    /// Parsed policy list; unknown names are reported with their position.
    pub fn policy_kinds(&self) -> Result<Vec<PolicyKind>, CliError> {
        self.policies
            .iter()
            .enumerate()
            .map(|(i, name)| {
                name.parse::<PolicyKind>()
                    .map_err(|e| invalid(format!("policies[{i}]"), e.to_string()))
            })
            .collect()
    }

    /// Checks every field needed by `run`; sweep sections are checked by
    /// [`validate_pareto`](Self::validate_pareto) and
    /// [`validate_capacity`](Self::validate_capacity).
    pub fn validate(&self) -> Result<(), CliError> {
        if !DOMAIN_NAMES.contains(&self.domain.as_str()) {
            return Err(invalid(
                "domain",
                format!(
                    "unknown domain {:?}; expected one of {DOMAIN_NAMES:?}",
                    self.domain
                ),
            ));
        }
        if self.n_arms() == 0 {
            return Err(invalid("n_arms", "must be at least 1"));
        }
        if self.budget() > self.n_arms() {
            return Err(invalid(
                "budget",
                format!("{} exceeds n_arms = {}", self.budget(), self.n_arms()),
            ));
        }
        if self.horizon() == 0 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        if self.seeds == 0 {
            return Err(invalid("seeds", "must be at least 1"));
        }
        if !(self.precision > 0.0 && self.precision < 1.0) {
            return Err(invalid(
                "precision",
                format!("{} not in (0, 1)", self.precision),
            ));
        }
        if self.policies.is_empty() {
            return Err(invalid("policies", "list is empty"));
        }
        for (i, kind) in self.policy_kinds()?.into_iter().enumerate() {
            if kind.needs_clinical_flag() && self.domain != "diabetes" {
                return Err(invalid(
                    format!("policies[{i}]"),
                    format!("{kind} needs the diabetes domain's clinical flag"),
                ));
            }
        }
        if self.maternal.is_some() && self.domain != "maternal" {
            return Err(invalid(
                "maternal",
                "section only applies to domain = \"maternal\"",
            ));
        }
        if self.diabetes.is_some() && self.domain != "diabetes" {
            return Err(invalid(
                "diabetes",
                "section only applies to domain = \"diabetes\"",
            ));
        }
        let m = self.maternal_options();
        if m.large_group >= 3 {
            return Err(invalid("maternal.large_group", "must be 0, 1 or 2"));
        }
        if !(0.0..=1.0).contains(&m.noise_scale) {
            return Err(invalid("maternal.noise_scale", "must lie in [0, 1]"));
        }
        let alpha = self.diabetes_options().alpha;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid("diabetes.alpha", format!("{alpha} outside [0, 1]")));
        }
        if let Some(p) = &self.pareto {
            self.check_alphas(p)?;
        }
        if let Some(c) = &self.capacity {
            self.check_capacity(c)?;
        }
        Ok(())
    }

    fn check_alphas(&self, p: &ParetoOptions) -> Result<(), CliError> {
        if p.alphas.is_empty() {
            return Err(invalid("pareto.alphas", "list is empty"));
        }
        for (i, a) in p.alphas.iter().enumerate() {
            if !(0.0..=1.0).contains(a) {
                return Err(invalid(
                    format!("pareto.alphas[{i}]"),
                    format!("{a} outside [0, 1]"),
                ));
            }
        }
        Ok(())
    }

    fn check_capacity(&self, c: &CapacityOptions) -> Result<(), CliError> {
        if c.budgets.is_empty() {
            return Err(invalid("capacity.budgets", "list is empty"));
        }
        if c.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("capacity.budgets", "must be strictly ascending"));
        }
        for (i, &b) in c.budgets.iter().enumerate() {
            if b > self.n_arms() {
                return Err(invalid(
                    format!("capacity.budgets[{i}]"),
                    format!("{b} exceeds n_arms = {}", self.n_arms()),
                ));
            }
        }
        if !c.target.is_finite() {
            return Err(invalid("capacity.target", "must be finite"));
        }
        Ok(())
    }

    pub fn validate_pareto(&self) -> Result<&ParetoOptions, CliError> {
        self.validate()?;
        if self.domain != "diabetes" {
            return Err(invalid(
                "domain",
                "pareto sweeps need domain = \"diabetes\"",
            ));
        }
        self.pareto
            .as_ref()
            .ok_or_else(|| invalid("pareto", "missing [pareto] section with alphas"))
    }

    pub fn validate_capacity(&self) -> Result<&CapacityOptions, CliError> {
        self.validate()?;
        self.capacity
            .as_ref()
            .ok_or_else(|| invalid("capacity", "missing [capacity] section"))
    }
}
