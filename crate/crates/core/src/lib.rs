//! Discrete-time simulator of grant-free NOMA uplink under bursty traffic,
//! where a subframe carries several overlapping configured grants, plus a
//! cooperative two-agent double-DQN that learns per-subframe grant
//! configurations maximizing served UEs within a one-subframe latency budget.
//!
//! Module map:
//! - [`grants`]: numerology arithmetic, grant parameters, latency accounting
//! - [`traffic`]: Beta-burst activation model and arrival binning
//! - [`phy`]: placement, fading, CTU contention, SIC decoding
//! - [`actions`]: feasible-action enumeration and schedule materialization
//! - [`nn`]: minimal MLP with hand-derived backprop and RMSProp
//! - [`agent`]: the two cooperating DQN agents, replay, targets, checkpoints
//! - [`sim`]: the per-episode loop tying the above together
//! - [`config`] / [`harness`]: scenario configuration and experiment drivers

pub mod actions;
pub mod agent;
pub mod config;
pub mod grants;
pub mod harness;
pub mod nn;
pub mod phy;
pub mod seeds;
pub mod sim;
pub mod traffic;

pub use actions::ActionCatalog;
pub use agent::{AgentBundle, SubframeObservation};
pub use config::{Policy, ScenarioConfig};
pub use grants::{FrameNumerology, GrantConfig, LatencyRecord, SubframeSchedule};
pub use harness::{run_scenario, HarnessError, MetricsRow, RunSummary};
pub use phy::{ChannelParams, CtuCensus, UeTransmission};
pub use sim::{run_episode, Environment, EpisodeMode, EpisodeResult};
pub use traffic::TrafficProfile;
