//! Bursty activation traffic and arrival-to-grant binning.
//!
//! Each device activates exactly once per episode, at an instant drawn from a
//! Beta(alpha, beta) density stretched over the traffic window. Activated
//! devices follow slotted-Aloha timing: a packet rides the earliest grant
//! whose starting slot lies strictly after the activation instant, so the
//! cohort of a grant is every activation in the half-open span from the
//! previous grant's start (inclusive) up to this grant's start (exclusive).
//! Activations later than the final grant start of the horizon are spilled
//! and counted, never silently dropped.

use crate::grants::SubframeSchedule;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::checked_beta_reg;
use thiserror::Error;

use crate::seeds;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("beta shape parameters must be positive, got alpha={0}, beta={1}")]
    InvalidShape(f64, f64),
    #[error("traffic duration must be positive, got {0} ms")]
    InvalidDuration(f64),
    #[error("interval ({0} ms, {1} ms) is inverted")]
    InvertedInterval(f64, f64),
    #[error("interval ({0} ms, {1} ms) extends outside the traffic window")]
    IntervalOutOfRange(f64, f64),
}

/// Parameters of the bursty activation process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub alpha: f64,
    pub beta: f64,
    /// Total traffic window in milliseconds.
    pub duration_ms: f64,
    /// Device population; each device activates once in the window.
    pub n_ue: u32,
}

impl TrafficProfile {
    pub fn new(alpha: f64, beta: f64, duration_ms: f64, n_ue: u32) -> Result<Self, TrafficError> {
        if !(alpha > 0.0) || !(beta > 0.0) {
            return Err(TrafficError::InvalidShape(alpha, beta));
        }
        if !(duration_ms > 0.0) {
            return Err(TrafficError::InvalidDuration(duration_ms));
        }
        Ok(Self { alpha, beta, duration_ms, n_ue })
    }

    /// Expected number of activations inside `(from_ms, to_ms)`, via the
    /// regularized incomplete Beta difference.
    pub fn arrival_rate(&self, from_ms: f64, to_ms: f64) -> Result<f64, TrafficError> {
        if to_ms < from_ms {
            return Err(TrafficError::InvertedInterval(from_ms, to_ms));
        }
        if from_ms < 0.0 || to_ms > self.duration_ms {
            return Err(TrafficError::IntervalOutOfRange(from_ms, to_ms));
        }
        let lo = checked_beta_reg(self.alpha, self.beta, from_ms / self.duration_ms)
            .expect("shape parameters validated at construction");
        let hi = checked_beta_reg(self.alpha, self.beta, to_ms / self.duration_ms)
            .expect("shape parameters validated at construction");
        Ok(self.n_ue as f64 * (hi - lo))
    }
}

/// Draw one activation time per device, in milliseconds.
pub fn sample_activation_times(profile: &TrafficProfile, seed: u64) -> Vec<f64> {
    let mut rng = seeds::stream(seed, &[]);
    let dist = Beta::new(profile.alpha, profile.beta)
        .expect("shape parameters validated at construction");
    (0..profile.n_ue)
        .map(|_| dist.sample(&mut rng) * profile.duration_ms)
        .collect()
}

/// Activations assigned to one grant, with the slot span they were drawn
/// from: `[interval_slots.0, interval_slots.1)` in absolute slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalBatch {
    /// Subframe index, 1-based.
    pub subframe: u32,
    /// Grant position within the subframe, 0-based.
    pub grant: usize,
    pub interval_slots: (f64, f64),
    pub ue_ids: Vec<u32>,
}

/// Result of binning a whole horizon of activations.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedArrivals {
    pub batches: Vec<ArrivalBatch>,
    /// Devices activating after the final grant start of the horizon.
    pub spilled: Vec<u32>,
}

/// Activation times sorted and converted to absolute slots, consumed
/// grant-by-grant as the horizon advances.
pub struct ArrivalStream {
    /// (ue_id, activation in absolute slots), ascending by time.
    sorted: Vec<(u32, f64)>,
    cursor: usize,
    last_boundary: f64,
}

impl ArrivalStream {
    pub fn new(activations_ms: &[f64], tti_ms: f64) -> Self {
        let mut sorted: Vec<(u32, f64)> = activations_ms
            .iter()
            .enumerate()
            .map(|(id, &ms)| (id as u32, ms / tti_ms))
            .collect();
        sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        Self { sorted, cursor: 0, last_boundary: 0.0 }
    }

    /// Consume and return every activation strictly before `boundary_slot`.
    /// An activation exactly on the boundary waits for a later grant.
    pub fn take_until(&mut self, boundary_slot: f64) -> &[(u32, f64)] {
        assert!(
            boundary_slot >= self.last_boundary,
            "grant boundaries must advance monotonically"
        );
        self.last_boundary = boundary_slot;
        let from = self.cursor;
        while self.cursor < self.sorted.len() && self.sorted[self.cursor].1 < boundary_slot {
            self.cursor += 1;
        }
        &self.sorted[from..self.cursor]
    }

    /// Activations not yet claimed by any grant.
    pub fn remaining(&self) -> &[(u32, f64)] {
        &self.sorted[self.cursor..]
    }
}

/// Assign every activation to a grant across the full horizon of schedules.
/// Schedules must be given in subframe order.
pub fn bin_arrivals(activations_ms: &[f64], schedules: &[SubframeSchedule]) -> BinnedArrivals {
    let mut batches = Vec::new();
    if schedules.is_empty() {
        return BinnedArrivals {
            batches,
            spilled: (0..activations_ms.len() as u32).collect(),
        };
    }
    let tti_ms = schedules[0].numerology.tti_ms();
    let mut stream = ArrivalStream::new(activations_ms, tti_ms);
    let mut prev_boundary = 0.0;
    for schedule in schedules {
        for grant in 0..schedule.grants.len() {
            let boundary = schedule.absolute_start(grant) as f64;
            let ue_ids = stream.take_until(boundary).iter().map(|&(id, _)| id).collect();
            batches.push(ArrivalBatch {
                subframe: schedule.index,
                grant,
                interval_slots: (prev_boundary, boundary),
                ue_ids,
            });
            prev_boundary = boundary;
        }
    }
    let spilled = stream.remaining().iter().map(|&(id, _)| id).collect();
    BinnedArrivals { batches, spilled }
}
