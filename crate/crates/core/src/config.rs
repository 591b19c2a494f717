//! Scenario configuration: every simulation and learning parameter with its
//! default, loadable from TOML and serializable back without loss.
//!
//! The file format is plain TOML: `key = value` lines with strings,
//! integers, floats, and lists, grouped into the sections below. Every key
//! is optional; omitted keys take the documented default.

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::actions::{ActionCatalog, ActionError};
use crate::agent::{EpsilonSchedule, LearningParams, StateLayout};
use crate::grants::{FrameNumerology, GrantError};
use crate::phy::{ChannelParams, PhyError};
use crate::traffic::{TrafficError, TrafficProfile};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid frame parameters: {0}")]
    Frame(#[from] GrantError),
    #[error("invalid channel parameters: {0}")]
    Channel(#[from] PhyError),
    #[error("invalid traffic parameters: {0}")]
    Traffic(#[from] TrafficError),
    #[error("infeasible action space: {0}")]
    Actions(#[from] ActionError),
    #[error("unknown policy '{0}' (expected learned, scg-baseline, random-mcg, or fixed-mcg:<ctu>,<start>)")]
    UnknownPolicy(String),
    #[error("fixed-mcg action index out of range: {0}")]
    FixedActionOutOfRange(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumerologyConfig {
    pub mu: u32,
    pub n_sym: u32,
}

impl Default for NumerologyConfig {
    fn default() -> Self {
        Self { mu: 2, n_sym: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub path_loss_exponent: f64,
    pub tx_power_dbm: f64,
    pub noise_power_dbm: f64,
    pub sinr_threshold_db: f64,
    pub cell_radius_m: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            path_loss_exponent: 4.0,
            tx_power_dbm: 23.0,
            noise_power_dbm: -132.0,
            sinr_threshold_db: -10.0,
            cell_radius_m: 10_000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Traffic window in whole milliseconds; one subframe per millisecond.
    pub duration_ms: u32,
    pub n_ue: u32,
}

impl Default for TrafficConfig {
    /// Desk-scale population; raise `n_ue` to 10000/50000 for the full
    /// low/high-traffic scenarios.
    fn default() -> Self {
        Self { alpha: 3.0, beta: 4.0, duration_ms: 1000, n_ue: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrantSetConfig {
    pub n_cg: usize,
    pub ctu_budget: u32,
    pub ctu_alphabet: Vec<u32>,
    pub start_alphabet: Vec<u32>,
    pub rb_count: u32,
}

impl Default for GrantSetConfig {
    fn default() -> Self {
        Self {
            n_cg: 5,
            ctu_budget: 64,
            ctu_alphabet: vec![8, 16, 24, 32, 40, 48, 56],
            start_alphabet: vec![0, 1, 2, 3, 4],
            rb_count: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningConfig {
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    pub epsilon_min: f64,
    /// Fraction of training episodes over which exploration decays.
    pub epsilon_decay_fraction: f64,
    pub discount: f64,
    pub minibatch: usize,
    pub replay_capacity: usize,
    pub target_sync_period: u64,
    pub episodes: u32,
    /// Greedy episodes appended after training; summaries average these.
    pub eval_episodes: u32,
    /// Subframes of history in the state vector.
    pub history_len: usize,
    pub hidden: Vec<usize>,
    pub warmup_transitions: usize,
    pub plain_dqn_target: bool,
    pub one_hot_actions: bool,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            rms_decay: 0.95,
            rms_epsilon: 1e-6,
            epsilon_min: 0.1,
            epsilon_decay_fraction: 0.4,
            discount: 0.5,
            minibatch: 32,
            replay_capacity: 10_000,
            target_sync_period: 1000,
            episodes: 300,
            eval_episodes: 50,
            history_len: 4,
            hidden: vec![128, 128],
            warmup_transitions: 1000,
            plain_dqn_target: false,
            one_hot_actions: false,
        }
    }
}

/// Which controller picks the per-subframe configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Policy {
    /// Train the two agents, then evaluate greedily.
    Learned,
    /// One grant holding the whole budget, starting at slot 0.
    ScgBaseline,
    /// Uniform random pick from both catalogs each subframe.
    RandomMcg,
    /// A pinned (ctu, start) action pair.
    FixedMcg { ctu_index: usize, start_index: usize },
}

impl Policy {
    pub fn parse(name: &str) -> Result<Self, ConfigError> {
        match name {
            "learned" => Ok(Self::Learned),
            "scg-baseline" => Ok(Self::ScgBaseline),
            "random-mcg" => Ok(Self::RandomMcg),
            other => {
                if let Some(rest) = other.strip_prefix("fixed-mcg:") {
                    let parts: Vec<&str> = rest.split(',').collect();
                    if parts.len() == 2 {
                        if let (Ok(c), Ok(s)) = (parts[0].parse(), parts[1].parse()) {
                            return Ok(Self::FixedMcg { ctu_index: c, start_index: s });
                        }
                    }
                    return Err(ConfigError::FixedActionOutOfRange(rest.to_string()));
                }
                Err(ConfigError::UnknownPolicy(other.to_string()))
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Learned => "learned".into(),
            Self::ScgBaseline => "scg-baseline".into(),
            Self::RandomMcg => "random-mcg".into(),
            Self::FixedMcg { ctu_index, start_index } => {
                format!("fixed-mcg:{ctu_index},{start_index}")
            }
        }
    }
}

/// Everything that defines a run. Serializes to TOML and back losslessly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub policy: String,
    /// Window of subframes that summaries call "peak"; inclusive bounds.
    pub peak_window: (u32, u32),
    pub numerology: NumerologyConfig,
    pub channel: ChannelConfig,
    pub traffic: TrafficConfig,
    pub grants: GrantSetConfig,
    pub learning: LearningConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 12345,
            policy: "scg-baseline".into(),
            peak_window: (350, 450),
            numerology: NumerologyConfig::default(),
            channel: ChannelConfig::default(),
            traffic: TrafficConfig::default(),
            grants: GrantSetConfig::default(),
            learning: LearningConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn numerology(&self) -> Result<FrameNumerology, ConfigError> {
        Ok(FrameNumerology::new(self.numerology.mu, self.numerology.n_sym)?)
    }

    pub fn channel_params(&self) -> Result<ChannelParams, ConfigError> {
        Ok(ChannelParams::new(
            self.channel.path_loss_exponent,
            self.channel.tx_power_dbm,
            self.channel.noise_power_dbm,
            self.channel.sinr_threshold_db,
            self.channel.cell_radius_m,
        )?)
    }

    pub fn traffic_profile(&self) -> Result<TrafficProfile, ConfigError> {
        Ok(TrafficProfile::new(
            self.traffic.alpha,
            self.traffic.beta,
            self.traffic.duration_ms as f64,
            self.traffic.n_ue,
        )?)
    }

    /// The catalog the configured grant set induces.
    pub fn catalog(&self) -> Result<ActionCatalog, ConfigError> {
        Ok(ActionCatalog::build(
            &self.grants.ctu_alphabet,
            &self.grants.start_alphabet,
            self.grants.ctu_budget,
            self.grants.n_cg,
            self.grants.rb_count,
            self.numerology()?,
        )?)
    }

    /// The degenerate single-grant catalog used by the baseline: the whole
    /// budget in one grant starting at slot 0.
    pub fn scg_catalog(&self) -> Result<ActionCatalog, ConfigError> {
        Ok(ActionCatalog::build(
            &[self.grants.ctu_budget],
            &[0],
            self.grants.ctu_budget,
            1,
            self.grants.rb_count,
            self.numerology()?,
        )?)
    }

    pub fn policy(&self) -> Result<Policy, ConfigError> {
        Policy::parse(&self.policy)
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            min: self.learning.epsilon_min,
            decay_fraction: self.learning.epsilon_decay_fraction,
        }
    }

    pub fn learning_params(&self) -> LearningParams {
        LearningParams {
            learning_rate: self.learning.learning_rate,
            rms_decay: self.learning.rms_decay,
            rms_epsilon: self.learning.rms_epsilon,
            discount: self.learning.discount,
            minibatch: self.learning.minibatch,
            replay_capacity: self.learning.replay_capacity,
            target_sync_period: self.learning.target_sync_period,
            warmup_transitions: self.learning.warmup_transitions,
            plain_dqn_target: self.learning.plain_dqn_target,
        }
    }

    pub fn state_layout(&self, catalog: &ActionCatalog) -> StateLayout {
        StateLayout {
            history_len: self.learning.history_len,
            ctu_actions: catalog.ctu_actions.len(),
            start_actions: catalog.start_actions.len(),
            budget: self.grants.ctu_budget,
            one_hot_actions: self.learning.one_hot_actions,
        }
    }
}
