//! Enumeration of the feasible joint actions for the two configuration
//! agents, and materialization of action pairs into concrete schedules.
//!
//! The CTU agent picks a vector of pool sizes that must sum to the
//! single-grant budget; the start agent picks a strictly increasing vector of
//! starting slots below `n_slot - 3`. Repetition counts are then forced by
//! the latency closure, so the two catalogs fully determine a schedule.
//! Catalogs are enumerated once, in lexicographic order, and treated as
//! immutable: an action index is stable across runs and restarts.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grants::{FrameNumerology, GrantConfig, SubframeSchedule, RTT_OVERHEAD_SLOTS};

#[derive(Debug, Error, PartialEq)]
pub enum ActionError {
    #[error("alphabet must be non-empty and strictly ascending")]
    MalformedAlphabet,
    #[error("starting-slot alphabet entry {0} needs room for a repetition before slot {1}")]
    StartAlphabetOutOfRange(u32, u32),
    #[error("no CTU split of budget {budget} into {n_cg} parts exists")]
    InfeasibleCtuCatalog { budget: u32, n_cg: usize },
    #[error("no strictly increasing choice of {n_cg} starting slots exists")]
    InfeasibleStartCatalog { n_cg: usize },
}

fn check_alphabet(alphabet: &[u32]) -> Result<(), ActionError> {
    if alphabet.is_empty() || alphabet.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ActionError::MalformedAlphabet);
    }
    Ok(())
}

/// All vectors over `alphabet` of length `n_cg` whose entries sum to
/// `budget`, in lexicographic order: an exhaustive odometer sweep of the
/// `|alphabet|^n_cg` combinations keeping those that meet the budget.
pub fn enumerate_ctu_actions(alphabet: &[u32], budget: u32, n_cg: usize) -> Vec<Vec<u32>> {
    std::iter::repeat_n(alphabet.iter().copied(), n_cg)
        .multi_cartesian_product()
        .filter(|v| v.iter().sum::<u32>() == budget)
        .collect()
}

/// All strictly increasing vectors of `n_cg` starting slots from `alphabet`,
/// in lexicographic order. Empty when `n_cg` exceeds the alphabet size.
pub fn enumerate_start_actions(alphabet: &[u32], n_cg: usize) -> Vec<Vec<u32>> {
    if n_cg > alphabet.len() {
        return Vec::new();
    }
    alphabet.iter().copied().combinations(n_cg).collect()
}

/// The immutable joint action space of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCatalog {
    pub ctu_actions: Vec<Vec<u32>>,
    pub start_actions: Vec<Vec<u32>>,
    pub ctu_alphabet: Vec<u32>,
    pub start_alphabet: Vec<u32>,
    pub n_cg: usize,
    pub budget: u32,
    pub n_slot: u32,
    /// Resource blocks each grant's CTU pool spans.
    pub rb_count: u32,
}

impl ActionCatalog {
    pub fn build(
        ctu_alphabet: &[u32],
        start_alphabet: &[u32],
        budget: u32,
        n_cg: usize,
        rb_count: u32,
        numerology: FrameNumerology,
    ) -> Result<Self, ActionError> {
        check_alphabet(ctu_alphabet)?;
        check_alphabet(start_alphabet)?;
        let n_slot = numerology.n_slot();
        let limit = n_slot - RTT_OVERHEAD_SLOTS;
        if let Some(&bad) = start_alphabet.iter().find(|&&s| s >= limit) {
            return Err(ActionError::StartAlphabetOutOfRange(bad, limit));
        }
        let ctu_actions = enumerate_ctu_actions(ctu_alphabet, budget, n_cg);
        if ctu_actions.is_empty() {
            return Err(ActionError::InfeasibleCtuCatalog { budget, n_cg });
        }
        let start_actions = enumerate_start_actions(start_alphabet, n_cg);
        if start_actions.is_empty() {
            return Err(ActionError::InfeasibleStartCatalog { n_cg });
        }
        Ok(Self {
            ctu_actions,
            start_actions,
            ctu_alphabet: ctu_alphabet.to_vec(),
            start_alphabet: start_alphabet.to_vec(),
            n_cg,
            budget,
            n_slot,
            rb_count,
        })
    }

    /// Turn an action pair into the schedule for subframe `t`. Repetition
    /// counts follow from the latency closure: `n_repe = n_slot - 3 - n_start`.
    pub fn materialize_schedule(
        &self,
        ctu_index: usize,
        start_index: usize,
        numerology: FrameNumerology,
        t: u32,
    ) -> SubframeSchedule {
        let ctu = &self.ctu_actions[ctu_index];
        let start = &self.start_actions[start_index];
        let grants = ctu
            .iter()
            .zip(start)
            .map(|(&n_ctu, &n_start)| {
                let n_repe = self.n_slot - RTT_OVERHEAD_SLOTS - n_start;
                GrantConfig::new(n_ctu, self.rb_count, n_start, n_repe, numerology)
                    .expect("enumerated actions satisfy every grant constraint")
            })
            .collect();
        SubframeSchedule::new(t, grants, numerology).expect("catalogs hold at least one grant")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grants::validate_schedule;

    fn numerology() -> FrameNumerology {
        FrameNumerology::new(2, 7).unwrap()
    }

    const CTU_ALPHABET: [u32; 7] = [8, 16, 24, 32, 40, 48, 56];
    const START_ALPHABET: [u32; 5] = [0, 1, 2, 3, 4];

    fn catalog(n_cg: usize) -> ActionCatalog {
        ActionCatalog::build(&CTU_ALPHABET, &START_ALPHABET, 64, n_cg, 4, numerology()).unwrap()
    }

    /// Recursive composition enumeration, independent of the odometer sweep.
    fn compositions(alphabet: &[u32], budget: u32, n: usize) -> Vec<Vec<u32>> {
        if n == 0 {
            return if budget == 0 { vec![vec![]] } else { vec![] };
        }
        let mut out = Vec::new();
        for &a in alphabet {
            if a <= budget {
                for mut tail in compositions(alphabet, budget - a, n - 1) {
                    tail.insert(0, a);
                    out.push(tail);
                }
            }
        }
        out
    }

    #[test]
    fn two_grant_ctu_catalog_is_exact() {
        let expected: Vec<Vec<u32>> = vec![
            vec![8, 56],
            vec![16, 48],
            vec![24, 40],
            vec![32, 32],
            vec![40, 24],
            vec![48, 16],
            vec![56, 8],
        ];
        assert_eq!(enumerate_ctu_actions(&CTU_ALPHABET, 64, 2), expected);
    }

    #[test]
    fn two_grant_start_catalog_is_exact() {
        let expected: Vec<Vec<u32>> = vec![
            vec![0, 1],
            vec![0, 2],
            vec![0, 3],
            vec![0, 4],
            vec![1, 2],
            vec![1, 3],
            vec![1, 4],
            vec![2, 3],
            vec![2, 4],
            vec![3, 4],
        ];
        assert_eq!(enumerate_start_actions(&START_ALPHABET, 2), expected);
    }

    #[test]
    fn degenerate_single_grant_catalog() {
        assert_eq!(enumerate_ctu_actions(&[64], 64, 1), vec![vec![64]]);
        assert_eq!(enumerate_start_actions(&START_ALPHABET, 5), vec![vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn three_grant_catalog_matches_recursive_oracle() {
        let swept = enumerate_ctu_actions(&CTU_ALPHABET, 64, 3);
        let recursive = compositions(&CTU_ALPHABET, 64, 3);
        assert_eq!(swept, recursive);
        // Compositions of 8 units into 3 parts of 1..=7 units each.
        assert_eq!(swept.len(), 21);
        assert!(swept.contains(&vec![8, 8, 48]));
        assert_eq!(enumerate_start_actions(&START_ALPHABET, 3).len(), 10);
    }

    #[test]
    fn oversized_subset_request_is_empty() {
        assert!(enumerate_start_actions(&START_ALPHABET, 6).is_empty());
        assert!(matches!(
            ActionCatalog::build(&CTU_ALPHABET, &START_ALPHABET, 64, 6, 4, numerology()),
            Err(ActionError::InfeasibleStartCatalog { n_cg: 6 })
        ));
    }

    #[test]
    fn out_of_range_start_alphabet_rejected() {
        assert!(matches!(
            ActionCatalog::build(&CTU_ALPHABET, &[0, 5], 64, 2, 4, numerology()),
            Err(ActionError::StartAlphabetOutOfRange(5, 5))
        ));
    }

    #[test]
    fn materialized_schedule_derives_repetitions() {
        let cat = catalog(2);
        let ctu_index = cat.ctu_actions.iter().position(|a| a == &vec![32, 32]).unwrap();
        let start_index = cat.start_actions.iter().position(|a| a == &vec![0, 1]).unwrap();
        let sched = cat.materialize_schedule(ctu_index, start_index, numerology(), 1);
        assert_eq!(
            sched.grants,
            vec![
                GrantConfig::new(32, 4, 0, 5, numerology()).unwrap(),
                GrantConfig::new(32, 4, 1, 4, numerology()).unwrap(),
            ]
        );
        // Latest allowed start leaves exactly one repetition.
        let cat1 = ActionCatalog::build(&[64], &[4], 64, 1, 4, numerology()).unwrap();
        let sched = cat1.materialize_schedule(0, 0, numerology(), 1);
        assert_eq!(sched.grants[0].n_repe, 1);
    }

    #[test]
    fn every_catalog_pair_validates() {
        let cat = catalog(3);
        for c in 0..cat.ctu_actions.len() {
            for s in 0..cat.start_actions.len() {
                let sched = cat.materialize_schedule(c, s, numerology(), 2);
                assert!(validate_schedule(&sched, 64).is_ok());
            }
        }
    }

    #[test]
    fn catalog_is_complete_over_the_alphabets() {
        // Brute-force every (ctu, start) vector over the alphabets; the ones
        // that validate as schedules are exactly the catalog pairs.
        let cat = catalog(2);
        let mut valid = 0usize;
        for ctu in std::iter::repeat_n(CTU_ALPHABET.iter().copied(), 2)
            .multi_cartesian_product()
        {
            for start in std::iter::repeat_n(START_ALPHABET.iter().copied(), 2)
                .multi_cartesian_product()
            {
                let grants: Vec<GrantConfig> = ctu
                    .iter()
                    .zip(&start)
                    .map(|(&n_ctu, &n_start)| {
                        GrantConfig::with_unchecked_timing(
                            n_ctu,
                            4,
                            n_start,
                            numerology().n_slot() - RTT_OVERHEAD_SLOTS - n_start,
                        )
                        .unwrap()
                    })
                    .collect();
                let sched = SubframeSchedule::new(1, grants, numerology()).unwrap();
                let ok = validate_schedule(&sched, 64).is_ok();
                let in_catalog = cat.ctu_actions.contains(&ctu) && cat.start_actions.contains(&start);
                assert_eq!(ok, in_catalog, "ctu {ctu:?} start {start:?}");
                valid += ok as usize;
            }
        }
        assert_eq!(valid, cat.ctu_actions.len() * cat.start_actions.len());
    }

    #[test]
    fn enumeration_is_stable() {
        let a = catalog(4);
        let b = catalog(4);
        assert_eq!(a, b);
        // Catalog sizes match the combinatorial counts.
        assert_eq!(a.start_actions.len(), 5); // C(5, 4)
        assert_eq!(a.ctu_actions.len(), compositions(&CTU_ALPHABET, 64, 4).len());
    }
}
