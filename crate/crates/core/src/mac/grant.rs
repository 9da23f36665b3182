//! Scheduled uplink: the gNB wins the channel, signals a grant on the
//! control channel and the chosen UE transmits its PUSCH after a fixed
//! processing delay.

use super::{MacTiming, SlotClock};

/// How a scheduled UE gains access at its PUSCH start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UplinkMode {
    /// A 25 µs one-shot check inside the gNB's occupancy.
    Cat2,
    /// The UE runs its own full Cat4 procedure after the grant.
    Cat4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    pub ue: usize,
    pub pdcch_start: u64,
    pub pdcch_end: u64,
    /// Earliest tick at which the PUSCH may begin.
    pub pusch_start: u64,
    pub mode: UplinkMode,
}

/// Picks the UE whose head-of-line file arrived first (ties to the lowest
/// id) among `(ue, head_arrival_us)` candidates and lays out the grant.
pub fn gnb_schedule(
    candidates: &[(usize, u64)],
    mode: UplinkMode,
    clock: &SlotClock,
    pdcch_start: u64,
    timing: &MacTiming,
) -> Option<Grant> {
    let &(ue, _) = candidates.iter().min_by_key(|&&(id, arrival)| (arrival, id))?;
    let pdcch_end = pdcch_start + timing.pdcch_us as u64;
    let pusch_start = clock.next_boundary(pdcch_end + timing.grant_delay_us as u64);
    Some(Grant {
        ue,
        pdcch_start,
        pdcch_end,
        pusch_start,
        mode,
    })
}
