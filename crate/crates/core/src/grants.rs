//! Frame numerology arithmetic, configured-grant parameters, and latency
//! accounting.
//!
//! A subframe lasts 1 ms and is divided into `n_slot` mini-slots whose
//! duration depends on the subcarrier-spacing numerology and the number of
//! OFDM symbols per mini-slot. Each configured grant occupies a window of
//! consecutive slots inside the subframe: it starts at `n_start`, carries
//! `n_repe` blind repetitions of the packet, and needs three further slots
//! for decode processing, feedback, and feedback processing. A grant is
//! latency-clean when that window closes exactly at the subframe boundary,
//! i.e. `n_start + n_repe + 3 == n_slot`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slots consumed after the last repetition: decode, feedback, and
/// feedback-processing, one slot each.
pub const RTT_OVERHEAD_SLOTS: u32 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum GrantError {
    #[error("numerology factor must be in 0..=4, got {0}")]
    InvalidNumerology(u32),
    #[error("symbols per mini-slot must be one of 2, 4, 7, 14, got {0}")]
    InvalidSymbolCount(u32),
    #[error("2^{mu} * 14 symbols do not divide into mini-slots of {n_sym} symbols")]
    NonIntegerSlotCount { mu: u32, n_sym: u32 },
    #[error("CTU pool must be non-empty")]
    EmptyCtuPool,
    #[error("CTU count {n_ctu} does not divide evenly over {rb_count} resource blocks")]
    UnevenCtuGrid { n_ctu: u32, rb_count: u32 },
    #[error("grant window {n_start}+{n_repe}+{RTT_OVERHEAD_SLOTS} must close at slot {n_slot}")]
    LatencyBudget { n_start: u32, n_repe: u32, n_slot: u32 },
    #[error("starting slot {n_start} must be below {limit}")]
    StartTooLate { n_start: u32, limit: u32 },
    #[error("schedule must contain at least one grant")]
    EmptySchedule,
    #[error("first grant of a later subframe needs the previous subframe's schedule")]
    MissingPreviousSchedule,
    #[error("latency and success lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Subcarrier-spacing numerology and mini-slot length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameNumerology {
    /// Numerology factor; subcarrier spacing is `2^mu * 15` kHz.
    mu: u32,
    /// OFDM symbols per mini-slot.
    n_sym: u32,
    /// Mini-slots per 1 ms subframe.
    n_slot: u32,
}

impl FrameNumerology {
    pub fn new(mu: u32, n_sym: u32) -> Result<Self, GrantError> {
        if mu > 4 {
            return Err(GrantError::InvalidNumerology(mu));
        }
        if !matches!(n_sym, 2 | 4 | 7 | 14) {
            return Err(GrantError::InvalidSymbolCount(n_sym));
        }
        let symbols_per_subframe = (1u32 << mu) * 14;
        if symbols_per_subframe % n_sym != 0 {
            return Err(GrantError::NonIntegerSlotCount { mu, n_sym });
        }
        Ok(Self { mu, n_sym, n_slot: symbols_per_subframe / n_sym })
    }

    pub fn mu(&self) -> u32 {
        self.mu
    }

    pub fn n_sym(&self) -> u32 {
        self.n_sym
    }

    /// Mini-slot duration in milliseconds: `n_sym / 2^mu / 14`.
    pub fn tti_ms(&self) -> f64 {
        self.n_sym as f64 / (1u64 << self.mu) as f64 / 14.0
    }

    /// Mini-slots per subframe: `2^mu * 14 / n_sym`.
    pub fn n_slot(&self) -> u32 {
        self.n_slot
    }
}

/// One configured grant: a CTU pool plus its timing inside the subframe.
///
/// The pool is an `rb_count x pilots_per_rb` grid; a CTU is one
/// (resource block, pilot) cell of that grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantConfig {
    /// CTUs in this grant's pool.
    pub n_ctu: u32,
    /// Frequency resource blocks the pool spans.
    pub rb_count: u32,
    /// Starting slot within the subframe, 0-based.
    pub n_start: u32,
    /// Number of blind repetitions.
    pub n_repe: u32,
}

impl GrantConfig {
    /// Build a grant and check every constraint, including the latency
    /// closure `n_start + n_repe + 3 == n_slot` and the start bound
    /// `n_start < n_slot - 3`.
    pub fn new(
        n_ctu: u32,
        rb_count: u32,
        n_start: u32,
        n_repe: u32,
        numerology: FrameNumerology,
    ) -> Result<Self, GrantError> {
        let grant = Self::with_unchecked_timing(n_ctu, rb_count, n_start, n_repe)?;
        let n_slot = numerology.n_slot();
        if n_start + n_repe + RTT_OVERHEAD_SLOTS != n_slot {
            return Err(GrantError::LatencyBudget { n_start, n_repe, n_slot });
        }
        if n_start >= n_slot - RTT_OVERHEAD_SLOTS {
            return Err(GrantError::StartTooLate { n_start, limit: n_slot - RTT_OVERHEAD_SLOTS });
        }
        Ok(grant)
    }

    /// Build a grant checking only the CTU grid, leaving timing to
    /// [`validate_schedule`]. Lets diagnostics describe schedules that a
    /// checked constructor would reject.
    pub fn with_unchecked_timing(
        n_ctu: u32,
        rb_count: u32,
        n_start: u32,
        n_repe: u32,
    ) -> Result<Self, GrantError> {
        if n_ctu == 0 {
            return Err(GrantError::EmptyCtuPool);
        }
        if rb_count == 0 || n_ctu % rb_count != 0 {
            return Err(GrantError::UnevenCtuGrid { n_ctu, rb_count });
        }
        Ok(Self { n_ctu, rb_count, n_start, n_repe })
    }

    /// Pilot sequences defined over each resource block.
    pub fn pilots_per_rb(&self) -> u32 {
        self.n_ctu / self.rb_count
    }

    /// Round-trip time in slots: repetitions plus fixed overhead.
    pub fn rtt_slots(&self) -> u32 {
        self.n_repe + RTT_OVERHEAD_SLOTS
    }
}

/// The grants configured for one subframe, ordered by starting slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubframeSchedule {
    /// Subframe index, 1-based.
    pub index: u32,
    pub grants: Vec<GrantConfig>,
    pub numerology: FrameNumerology,
}

/// Latency of a served UE, split into its two components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyRecord {
    /// Interval from the previous grant's start to this grant's start.
    pub wait_slots: u32,
    /// Repetitions plus decode/feedback overhead.
    pub rtt_slots: u32,
    pub total_slots: u32,
    pub total_ms: f64,
}

impl SubframeSchedule {
    pub fn new(
        index: u32,
        grants: Vec<GrantConfig>,
        numerology: FrameNumerology,
    ) -> Result<Self, GrantError> {
        if grants.is_empty() {
            return Err(GrantError::EmptySchedule);
        }
        Ok(Self { index, grants, numerology })
    }

    pub fn n_cg(&self) -> usize {
        self.grants.len()
    }

    /// Absolute starting slot of grant `i`, counted from subframe 1 slot 0.
    pub fn absolute_start(&self, grant_index: usize) -> u64 {
        (self.index as u64 - 1) * self.numerology.n_slot() as u64
            + self.grants[grant_index].n_start as u64
    }

    /// Waiting time of grant `grant_index` (0-based) in slots: the span from
    /// the previous grant's starting slot to this grant's. For the first
    /// grant of the first subframe the wait is zero; for the first grant of
    /// a later subframe it is measured from the previous subframe's last
    /// grant start to the subframe boundary.
    pub fn waiting_slots(
        &self,
        prev: Option<&SubframeSchedule>,
        grant_index: usize,
    ) -> Result<u32, GrantError> {
        assert!(grant_index < self.grants.len(), "grant index out of range");
        if grant_index > 0 {
            let cur = self.grants[grant_index].n_start;
            let before = self.grants[grant_index - 1].n_start;
            assert!(before < cur, "grants must be ordered by starting slot");
            return Ok(cur - before);
        }
        if self.index <= 1 {
            return Ok(0);
        }
        let prev = prev.ok_or(GrantError::MissingPreviousSchedule)?;
        let last_start = prev
            .grants
            .last()
            .expect("schedules hold at least one grant")
            .n_start;
        Ok(self.numerology.n_slot() - last_start)
    }

    /// Waiting time plus RTT for grant `grant_index`.
    pub fn latency(
        &self,
        prev: Option<&SubframeSchedule>,
        grant_index: usize,
    ) -> Result<LatencyRecord, GrantError> {
        let wait_slots = self.waiting_slots(prev, grant_index)?;
        let rtt_slots = self.grants[grant_index].rtt_slots();
        let total_slots = wait_slots + rtt_slots;
        Ok(LatencyRecord {
            wait_slots,
            rtt_slots,
            total_slots,
            total_ms: total_slots as f64 * self.numerology.tti_ms(),
        })
    }
}

/// Success-weighted mean of per-grant latencies. `Ok(None)` when no UE was
/// served, so callers can skip the subframe instead of averaging in a fake
/// zero.
pub fn average_latency(
    latency_slots: &[u32],
    successes: &[u32],
) -> Result<Option<f64>, GrantError> {
    if latency_slots.len() != successes.len() {
        return Err(GrantError::LengthMismatch(latency_slots.len(), successes.len()));
    }
    let total: u64 = successes.iter().map(|&s| s as u64).sum();
    if total == 0 {
        return Ok(None);
    }
    let weighted: f64 = latency_slots
        .iter()
        .zip(successes)
        .map(|(&l, &s)| l as f64 * s as f64)
        .sum();
    Ok(Some(weighted / total as f64))
}

/// One violated scheduling constraint, with the grant positions involved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintViolation {
    /// Pool sizes must add up to the single-grant CTU budget.
    CtuBudget { total: u32, budget: u32 },
    /// `n_start + n_repe + 3` must equal `n_slot`.
    LatencyClosure { grant: usize, n_start: u32, n_repe: u32, n_slot: u32 },
    /// Starting slots must be strictly increasing.
    StartOrdering { position: usize },
    /// Every starting slot must leave room for one repetition and overhead.
    StartBound { grant: usize, n_start: u32, limit: u32 },
}

impl std::fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::CtuBudget { total, budget } => {
                write!(f, "CTU pools sum to {total}, budget is {budget}")
            }
            Self::LatencyClosure { grant, n_start, n_repe, n_slot } => write!(
                f,
                "grant {grant}: window {n_start}+{n_repe}+{RTT_OVERHEAD_SLOTS} does not close at slot {n_slot}"
            ),
            Self::StartOrdering { position } => {
                write!(f, "grant {position} does not start after grant {}", position - 1)
            }
            Self::StartBound { grant, n_start, limit } => {
                write!(f, "grant {grant}: starting slot {n_start} must be below {limit}")
            }
        }
    }
}

/// Outcome of checking a schedule against the three scheduling constraints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleValidation {
    pub violations: Vec<ConstraintViolation>,
}

impl ScheduleValidation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the CTU budget, the latency closure of every grant, and the
/// starting-slot ordering/bound. Violations are reported, not raised.
pub fn validate_schedule(schedule: &SubframeSchedule, budget: u32) -> ScheduleValidation {
    let mut violations = Vec::new();
    let n_slot = schedule.numerology.n_slot();
    let limit = n_slot - RTT_OVERHEAD_SLOTS;

    let total: u32 = schedule.grants.iter().map(|g| g.n_ctu).sum();
    if total != budget {
        violations.push(ConstraintViolation::CtuBudget { total, budget });
    }
    for (i, grant) in schedule.grants.iter().enumerate() {
        if grant.n_start + grant.n_repe + RTT_OVERHEAD_SLOTS != n_slot {
            violations.push(ConstraintViolation::LatencyClosure {
                grant: i,
                n_start: grant.n_start,
                n_repe: grant.n_repe,
                n_slot,
            });
        }
        if grant.n_start >= limit {
            violations.push(ConstraintViolation::StartBound {
                grant: i,
                n_start: grant.n_start,
                limit,
            });
        }
        if i > 0 && schedule.grants[i - 1].n_start >= grant.n_start {
            violations.push(ConstraintViolation::StartOrdering { position: i });
        }
    }
    ScheduleValidation { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn numerology() -> FrameNumerology {
        FrameNumerology::new(2, 7).unwrap()
    }

    fn grant(n_ctu: u32, n_start: u32, n_repe: u32) -> GrantConfig {
        GrantConfig::with_unchecked_timing(n_ctu, 1, n_start, n_repe).unwrap()
    }

    #[test]
    fn tti_durations() {
        assert_eq!(numerology().tti_ms(), 0.125);
        assert_eq!(FrameNumerology::new(0, 14).unwrap().tti_ms(), 1.0);
        let fine = FrameNumerology::new(4, 2).unwrap();
        assert!((fine.tti_ms() - 2.0 / (16.0 * 14.0)).abs() < 1e-15);
    }

    #[test]
    fn slots_per_subframe() {
        assert_eq!(numerology().n_slot(), 8);
        assert_eq!(FrameNumerology::new(0, 14).unwrap().n_slot(), 1);
        assert_eq!(FrameNumerology::new(1, 7).unwrap().n_slot(), 4);
    }

    #[test]
    fn invalid_numerologies_rejected() {
        assert_eq!(FrameNumerology::new(5, 7).unwrap_err(), GrantError::InvalidNumerology(5));
        assert_eq!(FrameNumerology::new(2, 3).unwrap_err(), GrantError::InvalidSymbolCount(3));
        // 14 symbols / 4 per mini-slot is not an integer number of slots.
        assert_eq!(
            FrameNumerology::new(0, 4).unwrap_err(),
            GrantError::NonIntegerSlotCount { mu: 0, n_sym: 4 }
        );
    }

    #[test]
    fn rtt_adds_fixed_overhead() {
        assert_eq!(grant(2, 0, 4).rtt_slots(), 7);
        assert_eq!(grant(2, 4, 1).rtt_slots(), 4);
    }

    #[test]
    fn checked_constructor_enforces_timing() {
        let num = numerology();
        assert!(GrantConfig::new(32, 4, 0, 5, num).is_ok());
        assert_eq!(
            GrantConfig::new(32, 4, 0, 4, num).unwrap_err(),
            GrantError::LatencyBudget { n_start: 0, n_repe: 4, n_slot: 8 }
        );
        assert_eq!(
            GrantConfig::new(32, 4, 5, 0, num).unwrap_err(),
            GrantError::StartTooLate { n_start: 5, limit: 5 }
        );
        assert_eq!(
            GrantConfig::new(30, 4, 0, 5, num).unwrap_err(),
            GrantError::UnevenCtuGrid { n_ctu: 30, rb_count: 4 }
        );
    }

    /// Four overlapping grants with starts 0..3, as in a four-grant layout.
    fn staircase_schedule(index: u32) -> SubframeSchedule {
        SubframeSchedule::new(
            index,
            vec![grant(2, 0, 4), grant(1, 1, 3), grant(3, 2, 2), grant(2, 3, 1)],
            numerology(),
        )
        .unwrap()
    }

    #[test]
    fn waiting_time_between_adjacent_grants() {
        let sched = staircase_schedule(1);
        assert_eq!(sched.waiting_slots(None, 2).unwrap(), 1);
    }

    #[test]
    fn first_grant_of_first_subframe_waits_zero() {
        let sched = staircase_schedule(1);
        assert_eq!(sched.waiting_slots(None, 0).unwrap(), 0);
    }

    #[test]
    fn first_grant_waits_from_previous_subframes_last_start() {
        let prev = SubframeSchedule::new(1, vec![grant(4, 3, 2)], numerology()).unwrap();
        let cur = SubframeSchedule::new(2, vec![grant(4, 0, 5)], numerology()).unwrap();
        assert_eq!(cur.waiting_slots(Some(&prev), 0).unwrap(), 5);
    }

    #[test]
    fn missing_previous_schedule_is_an_error() {
        let cur = SubframeSchedule::new(2, vec![grant(4, 0, 5)], numerology()).unwrap();
        assert_eq!(cur.waiting_slots(None, 0).unwrap_err(), GrantError::MissingPreviousSchedule);
    }

    #[test]
    fn latency_combines_wait_and_rtt() {
        let sched = staircase_schedule(1);
        let lat = sched.latency(None, 1).unwrap();
        assert_eq!(lat.wait_slots, 1);
        assert_eq!(lat.rtt_slots, 6);
        assert_eq!(lat.total_slots, 7);
        assert!((lat.total_ms - 7.0 * 0.125).abs() < 1e-12);
    }

    #[test]
    fn latency_first_subframe_is_rtt_only() {
        let sched = SubframeSchedule::new(1, vec![grant(4, 0, 4)], numerology()).unwrap();
        assert_eq!(sched.latency(None, 0).unwrap().total_slots, 7);
    }

    #[test]
    fn latency_across_subframe_boundary() {
        let prev = SubframeSchedule::new(3, vec![grant(4, 4, 1)], numerology()).unwrap();
        let cur = SubframeSchedule::new(4, vec![grant(4, 0, 5)], numerology()).unwrap();
        let lat = cur.latency(Some(&prev), 0).unwrap();
        assert_eq!(lat.wait_slots, 4);
        assert_eq!(lat.rtt_slots, 8);
        assert_eq!(lat.total_slots, 12);
    }

    #[test]
    fn average_latency_weighted_cases() {
        assert_eq!(average_latency(&[7, 6], &[1, 1]).unwrap(), Some(6.5));
        assert_eq!(average_latency(&[7, 6], &[0, 4]).unwrap(), Some(6.0));
        assert_eq!(average_latency(&[7, 6, 5], &[2, 1, 1]).unwrap(), Some(6.25));
        assert_eq!(average_latency(&[7, 6], &[0, 0]).unwrap(), None);
        assert_eq!(
            average_latency(&[7], &[1, 2]).unwrap_err(),
            GrantError::LengthMismatch(1, 2)
        );
    }

    #[test]
    fn validator_flags_short_windows() {
        let report = validate_schedule(&staircase_schedule(1), 8);
        assert!(!report.is_ok());
        // Every grant's window closes one slot early.
        let latency_violations = report
            .violations
            .iter()
            .filter(|v| matches!(v, ConstraintViolation::LatencyClosure { .. }))
            .count();
        assert_eq!(latency_violations, 4);
    }

    #[test]
    fn validator_accepts_clean_schedule() {
        let sched = SubframeSchedule::new(
            1,
            vec![grant(32, 0, 5), grant(32, 1, 4)],
            numerology(),
        )
        .unwrap();
        assert!(validate_schedule(&sched, 64).is_ok());
    }

    #[test]
    fn validator_flags_unsorted_starts() {
        let sched = SubframeSchedule::new(
            1,
            vec![grant(32, 1, 4), grant(32, 0, 5)],
            numerology(),
        )
        .unwrap();
        let report = validate_schedule(&sched, 64);
        assert!(report
            .violations
            .contains(&ConstraintViolation::StartOrdering { position: 1 }));
    }

    #[test]
    fn validator_flags_budget_and_bound() {
        let sched = SubframeSchedule::new(
            1,
            vec![grant(32, 0, 5), grant(32, 5, 0)],
            numerology(),
        )
        .unwrap();
        let report = validate_schedule(&sched, 60);
        assert!(report.violations.contains(&ConstraintViolation::CtuBudget { total: 64, budget: 60 }));
        assert!(report
            .violations
            .contains(&ConstraintViolation::StartBound { grant: 1, n_start: 5, limit: 5 }));
    }

    proptest! {
        /// Mini-slot duration times slot count is always exactly one subframe.
        #[test]
        fn tti_times_slots_is_one_ms(mu in 0u32..=4, sym_pick in 0usize..4) {
            let n_sym = [2u32, 4, 7, 14][sym_pick];
            if let Ok(num) = FrameNumerology::new(mu, n_sym) {
                prop_assert!((num.tti_ms() * num.n_slot() as f64 - 1.0).abs() < 1e-12);
            }
        }

        /// The checked constructor only accepts windows closing at the boundary.
        #[test]
        fn checked_grants_close_at_boundary(n_start in 0u32..8, n_repe in 0u32..9) {
            let num = FrameNumerology::new(2, 7).unwrap();
            match GrantConfig::new(8, 4, n_start, n_repe, num) {
                Ok(g) => prop_assert_eq!(g.n_start + g.n_repe + RTT_OVERHEAD_SLOTS, num.n_slot()),
                Err(_) => prop_assert!(
                    n_start + n_repe + RTT_OVERHEAD_SLOTS != num.n_slot()
                        || n_start >= num.n_slot() - RTT_OVERHEAD_SLOTS
                ),
            }
        }

        /// Success-weighted latency is invariant under permutation of pairs.
        #[test]
        fn average_latency_permutation_invariant(
            pairs in proptest::collection::vec((1u32..20, 0u32..10), 1..8),
            swap_a in 0usize..8,
            swap_b in 0usize..8,
        ) {
            let lat: Vec<u32> = pairs.iter().map(|p| p.0).collect();
            let suc: Vec<u32> = pairs.iter().map(|p| p.1).collect();
            let mut shuffled = pairs.clone();
            let (a, b) = (swap_a % pairs.len(), swap_b % pairs.len());
            shuffled.swap(a, b);
            let lat2: Vec<u32> = shuffled.iter().map(|p| p.0).collect();
            let suc2: Vec<u32> = shuffled.iter().map(|p| p.1).collect();
            let x = average_latency(&lat, &suc).unwrap();
            let y = average_latency(&lat2, &suc2).unwrap();
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }
}
