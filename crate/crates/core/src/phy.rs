//! Radio layer: UE placement, path loss, Rayleigh fading, CTU contention,
//! and successive interference cancellation.
//!
//! Each transmitting UE picks one contention transmission unit (CTU) from its
//! grant's pool, a (resource block, pilot) cell. The base station detects the
//! UEs sitting alone on a CTU and runs SIC per resource block and repetition:
//! candidates are decoded strongest-first, each success is subtracted from
//! the received signal, and the pass stops at the first failure. UEs sharing
//! a CTU are undetectable and act purely as interference. Resource blocks are
//! orthogonal, so decoding on one block never sees power from another.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grants::GrantConfig;
use crate::seeds;

#[derive(Debug, Error, PartialEq)]
pub enum PhyError {
    #[error("path-loss exponent must exceed 2, got {0}")]
    InvalidPathLoss(f64),
    #[error("cell radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("distance must be positive, got {0}")]
    DistanceSingularity(f64),
}

/// Link-budget parameters, in the units they are usually quoted in.
/// Conversions to linear milliwatts happen once, at this boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub path_loss_exponent: f64,
    pub tx_power_dbm: f64,
    pub noise_power_dbm: f64,
    pub sinr_threshold_db: f64,
    pub cell_radius_m: f64,
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

impl ChannelParams {
    pub fn new(
        path_loss_exponent: f64,
        tx_power_dbm: f64,
        noise_power_dbm: f64,
        sinr_threshold_db: f64,
        cell_radius_m: f64,
    ) -> Result<Self, PhyError> {
        if !(path_loss_exponent > 2.0) {
            return Err(PhyError::InvalidPathLoss(path_loss_exponent));
        }
        if !(cell_radius_m > 0.0) {
            return Err(PhyError::InvalidRadius(cell_radius_m));
        }
        Ok(Self {
            path_loss_exponent,
            tx_power_dbm,
            noise_power_dbm,
            sinr_threshold_db,
            cell_radius_m,
        })
    }

    pub fn tx_power_mw(&self) -> f64 {
        dbm_to_mw(self.tx_power_dbm)
    }

    pub fn noise_mw(&self) -> f64 {
        dbm_to_mw(self.noise_power_dbm)
    }

    pub fn sinr_threshold_linear(&self) -> f64 {
        dbm_to_mw(self.sinr_threshold_db)
    }
}

/// Received power in linear milliwatts for a UE at distance `r` with fading
/// gain `h`: transmit power scaled by `h * r^-eta`.
pub fn received_power(params: &ChannelParams, r_m: f64, h: f64) -> Result<f64, PhyError> {
    if !(r_m > 0.0) {
        return Err(PhyError::DistanceSingularity(r_m));
    }
    debug_assert!(h > 0.0);
    Ok(params.tx_power_mw() * h * r_m.powf(-params.path_loss_exponent))
}

/// Drop `n` UEs uniformly over the disk of the given radius and return their
/// distances from the centre. The disk CDF is `(r/R)^2`, so `r = R * sqrt(u)`
/// with `u` drawn from `(0, 1]` to keep every distance strictly positive.
pub fn place_ues(n: u32, radius_m: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeds::stream(seed, &[]);
    (0..n)
        .map(|_| {
            let u: f64 = 1.0 - rng.random::<f64>();
            radius_m * u.sqrt()
        })
        .collect()
}

/// How one transmission fared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeOutcome {
    /// Decoded; the 1-based repetition in which it first succeeded.
    Success { repetition: u32 },
    /// Shared a CTU with another UE; undetectable.
    Collision,
    /// Alone on its CTU but never above the SINR threshold.
    SicFailure,
}

/// One UE's attempt within a grant period.
#[derive(Debug, Clone, PartialEq)]
pub struct UeTransmission {
    pub ue_id: u32,
    pub distance_m: f64,
    /// Grant position within the subframe, 0-based.
    pub grant_index: usize,
    pub rb_index: u32,
    pub pilot_index: u32,
    /// Fading gain per repetition, filled in by decoding.
    pub fading: Vec<f64>,
    pub outcome: DecodeOutcome,
}

/// Per-grant CTU classification after collision detection, plus the per-RB
/// UE partitions that SIC needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CtuCensus {
    /// (rb, pilot) cells nobody picked.
    pub idle: Vec<(u32, u32)>,
    /// Cells picked by exactly one UE.
    pub singleton: Vec<(u32, u32)>,
    /// Cells picked by two or more UEs.
    pub collision: Vec<(u32, u32)>,
    /// Indices into the transmission list of singleton UEs, per RB.
    pub singleton_ues_per_rb: Vec<Vec<usize>>,
    /// Indices into the transmission list of collision UEs, per RB.
    pub collision_ues_per_rb: Vec<Vec<usize>>,
}

impl CtuCensus {
    pub fn singleton_ue_count(&self) -> usize {
        self.singleton_ues_per_rb.iter().map(Vec::len).sum()
    }

    pub fn collision_ue_count(&self) -> usize {
        self.collision_ues_per_rb.iter().map(Vec::len).sum()
    }
}

/// Let each UE of the cohort pick a CTU uniformly at random from the grant's
/// pool, then classify every CTU as idle, singleton, or collision.
///
/// `distances` is indexed by `ue_id`.
pub fn select_ctus(
    cohort: &[u32],
    distances: &[f64],
    grant: &GrantConfig,
    grant_index: usize,
    seed: u64,
) -> (Vec<UeTransmission>, CtuCensus) {
    let mut rng = seeds::stream(seed, &[]);
    let pilots = grant.pilots_per_rb();
    let n_ctu = grant.n_ctu as usize;

    let mut occupants: Vec<Vec<usize>> = vec![Vec::new(); n_ctu];
    let mut transmissions = Vec::with_capacity(cohort.len());
    for (tx_index, &ue_id) in cohort.iter().enumerate() {
        let ctu = rng.random_range(0..n_ctu);
        occupants[ctu].push(tx_index);
        transmissions.push(UeTransmission {
            ue_id,
            distance_m: distances[ue_id as usize],
            grant_index,
            rb_index: ctu as u32 / pilots,
            pilot_index: ctu as u32 % pilots,
            fading: Vec::new(),
            outcome: DecodeOutcome::Collision,
        });
    }

    let mut census = CtuCensus {
        idle: Vec::new(),
        singleton: Vec::new(),
        collision: Vec::new(),
        singleton_ues_per_rb: vec![Vec::new(); grant.rb_count as usize],
        collision_ues_per_rb: vec![Vec::new(); grant.rb_count as usize],
    };
    for (ctu, picks) in occupants.iter().enumerate() {
        let cell = (ctu as u32 / pilots, ctu as u32 % pilots);
        match picks.len() {
            0 => census.idle.push(cell),
            1 => {
                census.singleton.push(cell);
                census.singleton_ues_per_rb[cell.0 as usize].push(picks[0]);
            }
            _ => {
                census.collision.push(cell);
                census.collision_ues_per_rb[cell.0 as usize].extend(picks.iter().copied());
            }
        }
    }
    (transmissions, census)
}

/// A detected UE entering one SIC pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SicCandidate {
    pub ue_id: u32,
    pub power_mw: f64,
}

/// One SIC pass over the singleton UEs of a single (grant, RB, repetition).
///
/// Candidates are decoded in descending received power; a decoded UE's power
/// is subtracted (perfect cancellation) and the pass stops at the first
/// stage whose SINR falls below the threshold. Collision UEs cannot be
/// decoded but their power stays in the denominator for every stage.
/// Returns the decoded `ue_id`s in decode order.
pub fn sic_decode_repetition(
    singletons: &[SicCandidate],
    collision_powers_mw: &[f64],
    params: &ChannelParams,
) -> Vec<u32> {
    let mut sorted: Vec<SicCandidate> = singletons.to_vec();
    // Strongest first; ties (measure-zero) broken by ascending ue_id.
    sorted.sort_by(|a, b| {
        b.power_mw
            .partial_cmp(&a.power_mw)
            .unwrap()
            .then(a.ue_id.cmp(&b.ue_id))
    });

    let floor: f64 = collision_powers_mw.iter().sum::<f64>() + params.noise_mw();
    let threshold = params.sinr_threshold_linear();
    let mut remaining: f64 = sorted.iter().map(|c| c.power_mw).sum();
    let mut decoded = Vec::new();
    for candidate in &sorted {
        remaining -= candidate.power_mw;
        let sinr = candidate.power_mw / (remaining + floor);
        if sinr >= threshold {
            decoded.push(candidate.ue_id);
        } else {
            break;
        }
    }
    decoded
}

/// Run SIC for every resource block and repetition of one grant period and
/// return the union of decoded UEs (ascending `ue_id`).
///
/// Fading is redrawn independently per UE and repetition, which is what
/// makes blind repetitions provide diversity. Every transmission's fading
/// trace and final outcome are written back into `transmissions`.
pub fn decode_grant(
    transmissions: &mut [UeTransmission],
    census: &CtuCensus,
    params: &ChannelParams,
    grant: &GrantConfig,
    seed: u64,
) -> Vec<u32> {
    let fading = Exp::new(1.0).expect("unit-rate exponential");
    let mut decoded_ids = Vec::new();

    for rb in 0..grant.rb_count as usize {
        let singles = &census.singleton_ues_per_rb[rb];
        let colliders = &census.collision_ues_per_rb[rb];
        if singles.is_empty() && colliders.is_empty() {
            continue;
        }
        let mut rng = seeds::stream(seed, &[rb as u64]);
        let mut decoded_on_rb: Vec<usize> = Vec::new();

        for repetition in 1..=grant.n_repe {
            let mut candidates = Vec::with_capacity(singles.len());
            for &tx in singles {
                let h = fading.sample(&mut rng);
                transmissions[tx].fading.push(h);
                let power = received_power(params, transmissions[tx].distance_m, h)
                    .expect("placement keeps distances positive");
                candidates.push(SicCandidate { ue_id: transmissions[tx].ue_id, power_mw: power });
            }
            let mut collision_powers = Vec::with_capacity(colliders.len());
            for &tx in colliders {
                let h = fading.sample(&mut rng);
                transmissions[tx].fading.push(h);
                let power = received_power(params, transmissions[tx].distance_m, h)
                    .expect("placement keeps distances positive");
                collision_powers.push(power);
            }

            for ue_id in sic_decode_repetition(&candidates, &collision_powers, params) {
                let tx = *singles
                    .iter()
                    .find(|&&tx| transmissions[tx].ue_id == ue_id)
                    .expect("decoded UE belongs to this RB");
                if !decoded_on_rb.contains(&tx) {
                    decoded_on_rb.push(tx);
                    transmissions[tx].outcome = DecodeOutcome::Success { repetition };
                }
            }
        }

        for &tx in singles {
            if !decoded_on_rb.contains(&tx) {
                transmissions[tx].outcome = DecodeOutcome::SicFailure;
            }
        }
        decoded_ids.extend(decoded_on_rb.iter().map(|&tx| transmissions[tx].ue_id));
    }
    decoded_ids.sort_unstable();
    decoded_ids
}
