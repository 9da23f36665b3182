//! NR-U listen-before-talk. Cat4 is a CSMA-like procedure with a 79 µs
//! defer and a random backoff; transmissions can only begin on mini-slot
//! boundaries, so a device that wins the channel between boundaries
//! occupies it with a reservation signal until the next one. Cat2 is a
//! single 25 µs idle check and Cat1 needs no sensing at all.

use rand::Rng;

use super::{MacTiming, SlotClock};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbtCategory {
    Cat1,
    Cat2,
    Cat4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbtPhase {
    Idle,
    Defer,
    Backoff,
    /// Backoff interrupted by a busy tick; resumes after a fresh defer.
    Frozen,
    /// Reservation signal, data, or waiting for the transmission outcome.
    Tx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbtAction {
    None,
    /// Channel won on a boundary: the payload starts now.
    StartTx,
    /// Channel won off-boundary: emit a reservation signal until `until`,
    /// where the payload starts.
    StartRs { until: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbtContext {
    pub cw: u32,
    pub backoff: u32,
    pub phase: LbtPhase,
    /// Consecutive idle ticks sensed, including the current one.
    pub idle_run: u32,
    slot_elapsed: u32,
    timing: MacTiming,
}

impl LbtContext {
    pub fn new(timing: MacTiming) -> Self {
        Self {
            cw: timing.cw_min,
            backoff: 0,
            phase: LbtPhase::Idle,
            idle_run: 0,
            slot_elapsed: 0,
            timing,
        }
    }

    /// Whether a Cat2 check ending at the current tick would succeed.
    pub fn cat2_ready(&self) -> bool {
        self.idle_run >= self.timing.cat2_window_us
    }

    /// Tracks the CCA only (used while a Cat2 or Cat1 device waits for its
    /// scheduled start).
    pub fn sense(&mut self, idle: bool) {
        self.idle_run = if idle { self.idle_run.saturating_add(1) } else { 0 };
    }

    /// One Cat4 tick at time `now`. `need` is whether there is something to
    /// send; the payload may not start before `not_before`.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        idle: bool,
        need: bool,
        now: u64,
        not_before: u64,
        clock: &SlotClock,
        rng: &mut R,
    ) -> LbtAction {
        if self.phase == LbtPhase::Tx {
            return LbtAction::None;
        }
        self.sense(idle);
        match self.phase {
            LbtPhase::Tx => LbtAction::None,
            LbtPhase::Idle => {
                if !need {
                    return LbtAction::None;
                }
                if self.idle_run >= self.timing.defer_us {
                    return self.win(now, not_before, clock);
                }
                self.backoff = MacTiming::draw_backoff(self.cw, rng);
                self.phase = LbtPhase::Defer;
                LbtAction::None
            }
            LbtPhase::Defer | LbtPhase::Frozen => {
                if !need {
                    self.phase = LbtPhase::Idle;
                    return LbtAction::None;
                }
                if self.idle_run < self.timing.defer_us {
                    return LbtAction::None;
                }
                self.slot_elapsed = 0;
                if self.backoff == 0 {
                    self.win(now, not_before, clock)
                } else {
                    self.phase = LbtPhase::Backoff;
                    LbtAction::None
                }
            }
            LbtPhase::Backoff => {
                if !need {
                    self.phase = LbtPhase::Idle;
                    return LbtAction::None;
                }
                if !idle {
                    self.phase = LbtPhase::Frozen;
                    self.slot_elapsed = 0;
                    return LbtAction::None;
                }
                self.slot_elapsed += 1;
                if self.slot_elapsed == self.timing.slot_us {
                    self.slot_elapsed = 0;
                    self.backoff -= 1;
                }
                if self.backoff == 0 {
                    self.win(now, not_before, clock)
                } else {
                    LbtAction::None
                }
            }
        }
    }

    fn win(&mut self, now: u64, not_before: u64, clock: &SlotClock) -> LbtAction {
        self.phase = LbtPhase::Tx;
        let start = clock.next_boundary(now.max(not_before));
        if start == now {
            LbtAction::StartTx
        } else {
            LbtAction::StartRs { until: start }
        }
    }

    /// Ticks of pure counting under constant input; see the CSMA
    /// counterpart.
    pub fn quiescent_ticks(&self, idle: bool, need: bool) -> u64 {
        match self.phase {
            LbtPhase::Tx => u64::MAX,
            LbtPhase::Idle => {
                if need {
                    0
                } else {
                    u64::MAX
                }
            }
            LbtPhase::Defer | LbtPhase::Frozen => {
                if !need {
                    0
                } else if !idle {
                    u64::MAX
                } else {
                    (self.timing.defer_us.saturating_sub(self.idle_run).max(1) - 1) as u64
                }
            }
            LbtPhase::Backoff => {
                if !need || !idle || self.backoff == 0 {
                    0
                } else {
                    (self.backoff * self.timing.slot_us - self.slot_elapsed - 1) as u64
                }
            }
        }
    }

    pub fn advance(&mut self, ticks: u64, idle: bool) {
        if ticks == 0 || self.phase == LbtPhase::Tx {
            return;
        }
        let k = ticks.min(u32::MAX as u64) as u32;
        self.idle_run = if idle { self.idle_run.saturating_add(k) } else { 0 };
        if self.phase == LbtPhase::Backoff {
            let total = self.slot_elapsed + k;
            self.backoff -= total / self.timing.slot_us;
            self.slot_elapsed = total % self.timing.slot_us;
        }
    }

    /// Outcome of the channel occupancy: success resets the window, failure
    /// doubles it.
    pub fn on_result(&mut self, success: bool) {
        self.cw = if success { self.timing.cw_min } else { self.timing.grow_cw(self.cw) };
        self.phase = LbtPhase::Idle;
        self.idle_run = 0;
        self.slot_elapsed = 0;
    }

    /// Occupancy cut short without feedback; the window is kept.
    pub fn abort(&mut self) {
        self.phase = LbtPhase::Idle;
        self.idle_run = 0;
        self.slot_elapsed = 0;
    }
}
