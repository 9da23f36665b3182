//! Channel-access state machines.
//!
//! Every context is stepped once per 1 µs tick with the CCA decision of
//! that tick. Each context also reports how many upcoming ticks are pure
//! counting for a fixed CCA input (`quiescent_ticks`) and can apply them in
//! bulk (`advance`), which lets the simulator jump over long idle or busy
//! stretches without changing the trajectory.

mod csma;
mod grant;
mod lbt;

pub use csma::{CsmaAction, CsmaContext, CsmaPhase};
pub use grant::{gnb_schedule, Grant, UplinkMode};
pub use lbt::{LbtAction, LbtCategory, LbtContext, LbtPhase};

use rand::Rng;

use crate::{Error, Result};

/// Access timing shared by both networks, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacTiming {
    pub slot_us: u32,
    pub sifs_us: u32,
    pub difs_us: u32,
    pub defer_us: u32,
    pub cw_min: u32,
    pub cw_max: u32,
    pub txop_us: u32,
    pub mcot_us: u32,
    pub ack_us: u32,
    pub pdcch_us: u32,
    pub grant_delay_us: u32,
    pub cat2_window_us: u32,
    pub cat1_gap_us: u32,
    pub mini_slot_us: u32,
}

impl Default for MacTiming {
    fn default() -> Self {
        Self {
            slot_us: 9,
            sifs_us: 16,
            difs_us: 16 + 2 * 9,
            defer_us: 79,
            cw_min: 16,
            cw_max: 1024,
            txop_us: 2528,
            mcot_us: 6000,
            ack_us: 32,
            pdcch_us: 36,
            grant_delay_us: 36,
            cat2_window_us: 25,
            cat1_gap_us: 16,
            mini_slot_us: 36,
        }
    }
}

impl MacTiming {
    pub(crate) fn draw_backoff<R: Rng + ?Sized>(cw: u32, rng: &mut R) -> u32 {
        rng.random_range(0..=cw)
    }

    pub(crate) fn grow_cw(&self, cw: u32) -> u32 {
        (cw.saturating_mul(2)).min(self.cw_max)
    }
}

/// NR-U spectrum slot boundaries on a 1 µs tick grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotClock {
    pub mini_slot_us: u64,
}

impl SlotClock {
    pub fn new(mini_slot_us: u64) -> Self {
        assert!(mini_slot_us > 0, "mini-slot must be positive");
        Self { mini_slot_us }
    }

    /// First boundary at or after `t`.
    pub fn next_boundary(&self, t: u64) -> u64 {
        t.div_ceil(self.mini_slot_us) * self.mini_slot_us
    }

    pub fn is_boundary(&self, t: u64) -> bool {
        t % self.mini_slot_us == 0
    }
}

/// Cat1 (no sensing) is allowed when the gap to the previous transmission is
/// at most 16 µs.
pub fn cat1_allowed(gap_us: f64) -> bool {
    (0.0..=16.0).contains(&gap_us)
}

/// Cat2 succeeds iff the trailing window of CCA decisions is all idle.
/// `history` is oldest first; fewer than `window` entries fails.
pub fn lbt_cat2_check(history: &[bool], window: usize) -> bool {
    history.len() >= window && history[history.len() - window..].iter().all(|&idle| idle)
}

/// Airtime for the next segment of a file: the remaining bits at `rate`
/// (bits per µs, numerically equal to Mbps) rounded up to the tick, capped by
/// the channel-occupancy budget.
pub fn transmission_length(remaining_bits: f64, rate_bits_per_us: f64, cot_budget_us: u64) -> Result<u64> {
    if cot_budget_us == 0 {
        return Err(Error::Domain("channel occupancy budget must be positive".into()));
    }
    if !(rate_bits_per_us > 0.0) {
        return Err(Error::Domain(format!("rate must be positive, got {rate_bits_per_us}")));
    }
    if remaining_bits <= 0.0 {
        return Ok(0);
    }
    let airtime = (remaining_bits / rate_bits_per_us - 1e-9).ceil().max(1.0) as u64;
    Ok(airtime.min(cot_budget_us))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ssb_alignment() {
        let clock = SlotClock::new(36);
        assert_eq!(clock.next_boundary(100), 108);
        assert_eq!(clock.next_boundary(108), 108);
        assert_eq!(clock.next_boundary(0), 0);
        assert!(clock.is_boundary(72));
        assert!(!clock.is_boundary(73));
    }

    #[test]
    fn cat1_gap_rule() {
        assert!(cat1_allowed(16.0));
        assert!(!cat1_allowed(16.5));
        assert!(cat1_allowed(0.0));
    }

    #[test]
    fn cat2_window() {
        assert!(lbt_cat2_check(&[true; 25], 25));
        let mut h = vec![true; 25];
        h[0] = false;
        assert!(!lbt_cat2_check(&h, 25));
        let mut h = vec![true; 26];
        h[0] = false;
        assert!(lbt_cat2_check(&h, 25));
        assert!(!lbt_cat2_check(&[true; 24], 25));
    }

    #[test]
    fn segment_lengths() {
        assert_eq!(transmission_length(4e6, 25.2, 6000).unwrap(), 6000);
        assert_eq!(transmission_length(1000.0, 21.7, 2528).unwrap(), 47);
        assert_eq!(transmission_length(0.0, 21.7, 2528).unwrap(), 0);
        assert_eq!(transmission_length(2170.0, 21.7, 2528).unwrap(), 100);
        assert!(transmission_length(1000.0, 21.7, 0).is_err());
        // 4 Mbit at 25.2 Mbps needs about 158.7 ms of airtime in total.
        let total_us: f64 = 4e6 / 25.2;
        assert!((total_us / 1000.0 - 158.73).abs() < 0.01);
    }

    #[test]
    fn difs_is_sifs_plus_two_slots() {
        let t = MacTiming::default();
        assert_eq!(t.difs_us, 34);
    }
}
