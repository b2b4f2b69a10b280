//! Experiment configuration files.
//!
//! One TOML document describes a whole run: the region (a file path or
//! synthetic-generator parameters), the demand profile and volume, the
//! fleet, the agent variant with optional hyperparameter overrides, and
//! the training/testing protocol. Every field has a default so a minimal
//! file (even an empty one) resolves to the standard synthetic study
//! setup.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentConfig, TargetUpdate};
use crate::demand::{self, HourlyProfile};
use crate::region::{self, RegionConfig};

use super::runner::{Scenario, TrainingMode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Region(#[from] region::RegionError),
    #[error(transparent)]
    Demand(#[from] demand::DemandError),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default)]
    pub region: RegionSection,
    #[serde(default)]
    pub demand: DemandSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
}

/// Either a region file or synthetic-generator parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub path: Option<String>,
    #[serde(default = "default_region_height")]
    pub height: u32,
    #[serde(default = "default_region_width")]
    pub width: u32,
    #[serde(default = "default_region_restaurants")]
    pub restaurants: u32,
    #[serde(default = "default_region_seed")]
    pub seed: u64,
}

fn default_region_height() -> u32 {
    10
}
fn default_region_width() -> u32 {
    10
}
fn default_region_restaurants() -> u32 {
    7
}
fn default_region_seed() -> u64 {
    42
}

impl Default for RegionSection {
    fn default() -> Self {
        Self {
            path: None,
            height: default_region_height(),
            width: default_region_width(),
            restaurants: default_region_restaurants(),
            seed: default_region_seed(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSection {
    #[serde(default = "default_daily_orders")]
    pub daily_orders: u32,
    /// Path to an hourly profile file; the built-in two-peak profile when
    /// absent.
    pub profile_path: Option<String>,
}

fn default_daily_orders() -> u32 {
    163
}

impl Default for DemandSection {
    fn default() -> Self {
        Self {
            daily_orders: default_daily_orders(),
            profile_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_couriers")]
    pub couriers: usize,
    #[serde(default = "default_max_queue")]
    pub max_queue: usize,
}

fn default_couriers() -> usize {
    5
}
fn default_max_queue() -> usize {
    2
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            couriers: default_couriers(),
            max_queue: default_max_queue(),
        }
    }
}

/// Agent variant plus optional overrides applied on top of it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    #[serde(default = "default_variant")]
    pub variant: String,
    pub gamma: Option<f64>,
    pub batch_size: Option<usize>,
    pub memory_capacity: Option<usize>,
    /// Hard-update period; mutually exclusive with `tau`.
    pub update_every: Option<u32>,
    /// Soft-update rate; switches the variant to soft updates.
    pub tau: Option<f64>,
    pub step_size: Option<f64>,
    pub alpha: Option<f64>,
    pub beta0: Option<f64>,
    pub epsilon_start: Option<f64>,
    pub epsilon_end: Option<f64>,
    pub epsilon_decay_fraction: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub huber: Option<bool>,
    pub updates_per_event: Option<u32>,
}

fn default_variant() -> String {
    "ddqn-h-per".into()
}

impl Default for AgentSection {
    fn default() -> Self {
        Self {
            variant: default_variant(),
            gamma: None,
            batch_size: None,
            memory_capacity: None,
            update_every: None,
            tau: None,
            step_size: None,
            alpha: None,
            beta0: None,
            epsilon_start: None,
            epsilon_end: None,
            epsilon_decay_fraction: None,
            hidden: None,
            huber: None,
            updates_per_event: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default = "default_mode")]
    pub mode: TrainingMode,
    #[serde(default = "default_training_days")]
    pub training_days: u32,
    #[serde(default = "default_test_days")]
    pub test_days: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_rp")]
    pub rp: f64,
}

fn default_mode() -> TrainingMode {
    TrainingMode::Single
}
fn default_training_days() -> u32 {
    200
}
fn default_test_days() -> u32 {
    50
}
fn default_seed() -> u64 {
    1
}
fn default_rp() -> f64 {
    45.0
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            training_days: default_training_days(),
            test_days: default_test_days(),
            seed: default_seed(),
            rp: default_rp(),
        }
    }
}

/// A fully resolved experiment, ready to run.
#[derive(Clone)]
pub struct ResolvedExperiment {
    pub scenario: Scenario,
    pub agent: AgentConfig,
    pub variant: String,
    pub mode: TrainingMode,
    pub training_days: u32,
    pub test_days: u32,
    pub seed: u64,
}

impl ExperimentFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Resolves paths (relative to `base_dir`), builds or loads the
    /// region, applies agent overrides, and validates everything.
    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedExperiment, ConfigError> {
        let region: RegionConfig = match &self.region.path {
            Some(p) => region::load_region(&base_dir.join(p))?,
            None => region::generate_synthetic_region(
                self.region.height,
                self.region.width,
                self.region.restaurants,
                self.region.seed,
            )?,
        };
        let profile = match &self.demand.profile_path {
            Some(p) => demand::load_profile(&base_dir.join(p))?,
            None => HourlyProfile::two_peak_default(),
        };
        profile.validate()?;

        let mut agent = AgentConfig::variant(&self.agent.variant).ok_or_else(|| {
            ConfigError::Invalid(format!(
                "unknown agent variant `{}` (expected one of {:?})",
                self.agent.variant,
                crate::agents::VARIANT_NAMES
            ))
        })?;
        let a = &self.agent;
        if let Some(v) = a.gamma {
            agent.gamma = v;
        }
        if let Some(v) = a.batch_size {
            agent.batch_size = v;
        }
        if let Some(v) = a.memory_capacity {
            agent.memory_capacity = v;
        }
        match (a.update_every, a.tau) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "agent.update_every and agent.tau are mutually exclusive".into(),
                ))
            }
            (Some(every), None) => agent.update = TargetUpdate::Hard { every },
            (None, Some(tau)) => agent.update = TargetUpdate::Soft { tau },
            (None, None) => {}
        }
        if let Some(v) = a.step_size {
            agent.step_size = v;
        }
        if let Some(v) = a.alpha {
            agent.alpha = v;
        }
        if let Some(v) = a.beta0 {
            agent.beta0 = v;
        }
        if let Some(v) = a.epsilon_start {
            agent.epsilon_start = v;
        }
        if let Some(v) = a.epsilon_end {
            agent.epsilon_end = v;
        }
        if let Some(v) = a.epsilon_decay_fraction {
            agent.epsilon_decay_fraction = v;
        }
        if let Some(v) = &a.hidden {
            agent.hidden = v.clone();
        }
        if let Some(v) = a.huber {
            agent.huber = v;
        }
        if let Some(v) = a.updates_per_event {
            agent.updates_per_event = v;
        }

        if self.simulation.couriers == 0 {
            return Err(ConfigError::Invalid(
                "simulation.couriers must be positive".into(),
            ));
        }
        if self.simulation.max_queue == 0 {
            return Err(ConfigError::Invalid(
                "simulation.max_queue must be positive".into(),
            ));
        }
        if self.protocol.rp <= 0.0 {
            return Err(ConfigError::Invalid("protocol.rp must be positive".into()));
        }

        Ok(ResolvedExperiment {
            scenario: Scenario {
                region: Arc::new(region),
                profile,
                daily_orders: self.demand.daily_orders,
                couriers: self.simulation.couriers,
                max_queue: self.simulation.max_queue,
                rp: self.protocol.rp,
            },
            agent,
            variant: self.agent.variant.clone(),
            mode: self.protocol.mode,
            training_days: self.protocol.training_days,
            test_days: self.protocol.test_days,
            seed: self.protocol.seed,
        })
    }
}
