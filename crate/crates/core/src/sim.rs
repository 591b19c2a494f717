//! The per-episode simulation loop.
//!
//! One episode covers the whole traffic window, one subframe per
//! millisecond. Each subframe: build the agents' state, pick the joint
//! action, materialize the schedule, hand the pending activations to their
//! grants, contend for CTUs, decode, and account latency. Under a training
//! mode the transition is stored and one gradient step runs.
//!
//! Everything stochastic draws from streams derived from
//! `(seed, episode, subframe, ...)`, so a run is a pure function of the
//! configuration and seed.

use std::collections::VecDeque;

use crate::actions::ActionCatalog;
use crate::agent::{reward, AgentBundle, HistoryEntry, SubframeObservation};
use crate::agent::epsilon_greedy;
use crate::grants::{average_latency, FrameNumerology, SubframeSchedule};
use crate::nn::NetError;
use crate::phy::{decode_grant, place_ues, select_ctus, ChannelParams};
use crate::seeds::{self, tag};
use crate::traffic::{sample_activation_times, ArrivalStream, TrafficProfile};

/// Immutable per-scenario context for episode runs.
#[derive(Debug, Clone)]
pub struct Environment {
    pub numerology: FrameNumerology,
    pub channel: ChannelParams,
    pub profile: TrafficProfile,
    pub catalog: ActionCatalog,
}

impl Environment {
    /// Subframes per episode: one per millisecond of the traffic window.
    pub fn subframes(&self) -> u32 {
        self.profile.duration_ms.round() as u32
    }
}

/// How actions are chosen during an episode.
pub enum EpisodeMode<'a> {
    /// Select with the given exploration rate and train after each subframe.
    Train { bundle: &'a mut AgentBundle, epsilon: f64 },
    /// Greedy selection on frozen weights.
    Greedy { bundle: &'a AgentBundle },
    /// Uniform random catalog picks.
    Random,
    /// One pinned action pair.
    Fixed { ctu_index: usize, start_index: usize },
}

/// Everything measured in one subframe.
#[derive(Debug, Clone, PartialEq)]
pub struct SubframeRecord {
    /// 1-based subframe index.
    pub subframe: u32,
    pub ctu_action: usize,
    pub start_action: usize,
    pub obs: SubframeObservation,
    pub reward: f64,
    /// Interval-based mean latency of served UEs, in slots / milliseconds;
    /// `None` when nothing was served.
    pub avg_latency_slots: Option<f64>,
    pub avg_latency_ms: Option<f64>,
    /// Activations handed to this subframe's grants.
    pub assigned_arrivals: u32,
    /// UEs that picked an already-taken CTU.
    pub collided_ues: u32,
    /// Activations past the final grant of the horizon (only ever non-zero
    /// in the last subframe).
    pub spill: u32,
    /// Diagnostic only: mean measured wait from each activation to its
    /// grant start. Reported latency uses the interval-based accounting.
    pub mean_actual_wait_slots: Option<f64>,
    /// Mean training loss across this subframe's gradient step, if one ran.
    pub train_loss: Option<f64>,
}

/// One finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub episode: u32,
    pub records: Vec<SubframeRecord>,
    pub total_reward: f64,
    pub spilled: u32,
}

/// Run one episode. `episode` numbers episodes from 1 and seeds every
/// stream, so distinct episodes see distinct traffic and channels.
pub fn run_episode(
    env: &Environment,
    mode: &mut EpisodeMode<'_>,
    base_seed: u64,
    episode: u32,
) -> Result<EpisodeResult, NetError> {
    let n_slot = env.numerology.n_slot() as u64;
    let tti_ms = env.numerology.tti_ms();
    let subframes = env.subframes();
    let ep = episode as u64;

    let distances = place_ues(
        env.profile.n_ue,
        env.channel.cell_radius_m,
        seeds::derive(base_seed, &[tag::PLACEMENT, ep]),
    );
    let activations = sample_activation_times(
        &env.profile,
        seeds::derive(base_seed, &[tag::TRAFFIC, ep]),
    );
    let mut arrivals = ArrivalStream::new(&activations, tti_ms);

    let layout = match mode {
        EpisodeMode::Train { bundle, .. } => Some(bundle.layout),
        EpisodeMode::Greedy { bundle } => Some(bundle.layout),
        _ => None,
    };
    let mut history: VecDeque<HistoryEntry> = VecDeque::new();
    let mut prev_schedule: Option<SubframeSchedule> = None;
    let mut records = Vec::with_capacity(subframes as usize);
    let mut total_reward = 0.0;

    for t in 1..=subframes {
        let state = layout.map(|l| l.build_state(&history));

        let (ctu_action, start_action) = match mode {
            EpisodeMode::Train { bundle, epsilon } => {
                let mut ctu_rng = seeds::stream(base_seed, &[tag::ACTION, ep, t as u64, 0]);
                let mut start_rng = seeds::stream(base_seed, &[tag::ACTION, ep, t as u64, 1]);
                bundle.select_actions(
                    state.as_ref().unwrap(),
                    *epsilon,
                    &mut ctu_rng,
                    &mut start_rng,
                )?
            }
            EpisodeMode::Greedy { bundle } => {
                let mut ctu_rng = seeds::stream(base_seed, &[tag::ACTION, ep, t as u64, 0]);
                let mut start_rng = seeds::stream(base_seed, &[tag::ACTION, ep, t as u64, 1]);
                bundle.select_actions(
                    state.as_ref().unwrap(),
                    0.0,
                    &mut ctu_rng,
                    &mut start_rng,
                )?
            }
            EpisodeMode::Random => {
                let mut ctu_rng = seeds::stream(base_seed, &[tag::ACTION, ep, t as u64, 0]);
                let mut start_rng = seeds::stream(base_seed, &[tag::ACTION, ep, t as u64, 1]);
                (
                    epsilon_greedy(&mut ctu_rng, 1.0, None, env.catalog.ctu_actions.len()),
                    epsilon_greedy(&mut start_rng, 1.0, None, env.catalog.start_actions.len()),
                )
            }
            EpisodeMode::Fixed { ctu_index, start_index } => (*ctu_index, *start_index),
        };

        let schedule =
            env.catalog.materialize_schedule(ctu_action, start_action, env.numerology, t);

        let mut obs = SubframeObservation::default();
        let mut per_grant_latency = Vec::with_capacity(schedule.grants.len());
        let mut per_grant_successes = Vec::with_capacity(schedule.grants.len());
        let mut assigned = 0u32;
        let mut collided = 0u32;
        let mut wait_sum = 0.0;

        for (i, grant) in schedule.grants.iter().enumerate() {
            let boundary = ((t as u64 - 1) * n_slot + grant.n_start as u64) as f64;
            let cohort_slots = arrivals.take_until(boundary);
            let cohort: Vec<u32> = cohort_slots.iter().map(|&(id, _)| id).collect();
            assigned += cohort.len() as u32;
            for &(_, slot) in cohort_slots {
                wait_sum += boundary - slot;
            }

            let (mut txs, census) = select_ctus(
                &cohort,
                &distances,
                grant,
                i,
                seeds::derive(base_seed, &[tag::CTU_PICK, ep, t as u64, i as u64]),
            );
            let decoded = decode_grant(
                &mut txs,
                &census,
                &env.channel,
                grant,
                seeds::derive(base_seed, &[tag::FADING, ep, t as u64, i as u64]),
            );

            let singleton_ues = census.singleton_ue_count() as u32;
            obs.n_cc += census.collision.len() as u32;
            obs.n_ic += census.idle.len() as u32;
            obs.n_sc += census.singleton.len() as u32;
            obs.n_suc += decoded.len() as u32;
            obs.n_fdec += singleton_ues - decoded.len() as u32;
            collided += census.collision_ue_count() as u32;

            let latency = schedule
                .latency(prev_schedule.as_ref(), i)
                .expect("subframes after the first always carry a previous schedule");
            per_grant_latency.push(latency.total_slots);
            per_grant_successes.push(decoded.len() as u32);
        }

        let avg_latency_slots = average_latency(&per_grant_latency, &per_grant_successes)
            .expect("lists are built in lockstep");
        let step_reward = reward(&obs);
        total_reward += step_reward;

        history.push_back(HistoryEntry { ctu_action, start_action, obs });
        let keep = layout.map_or(1, |l| l.history_len);
        while history.len() > keep {
            history.pop_front();
        }

        let mut train_loss = None;
        if let EpisodeMode::Train { bundle, .. } = mode {
            let next_state = bundle.layout.build_state(&history);
            bundle.store(
                state.as_ref().unwrap(),
                ctu_action,
                start_action,
                step_reward,
                &next_state,
            );
            let mut train_rng = seeds::stream(base_seed, &[tag::TRAIN, ep, t as u64]);
            train_loss = bundle.train_step(&mut train_rng)?.map(|s| s.mean_loss);
        }

        let spill = if t == subframes { arrivals.remaining().len() as u32 } else { 0 };
        records.push(SubframeRecord {
            subframe: t,
            ctu_action,
            start_action,
            obs,
            reward: step_reward,
            avg_latency_slots,
            avg_latency_ms: avg_latency_slots.map(|s| s * tti_ms),
            assigned_arrivals: assigned,
            collided_ues: collided,
            spill,
            mean_actual_wait_slots: if assigned > 0 {
                Some(wait_sum / assigned as f64)
            } else {
                None
            },
            train_loss,
        });
        prev_schedule = Some(schedule);
    }

    let spilled = records.last().map_or(0, |r| r.spill);
    if let EpisodeMode::Train { bundle, .. } = mode {
        bundle.episodes_trained += 1;
    }
    Ok(EpisodeResult { episode, records, total_reward, spilled })
}
