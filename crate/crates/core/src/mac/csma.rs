//! WiFi DCF: DIFS sensing, slotted random backoff with freezing, binary
//! exponential contention window and SIFS-spaced ACK.

use rand::Rng;

use super::MacTiming;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsmaPhase {
    Idle,
    /// Waiting for a DIFS of continuous idle before (re)starting backoff.
    Difs,
    Backoff,
    /// Backoff interrupted by a busy tick; resumes after a fresh DIFS.
    Frozen,
    Tx,
    AwaitAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsmaAction {
    None,
    StartTx,
    /// Emitted by the receiving AP a SIFS after a decoded frame.
    StartAck,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsmaContext {
    pub cw: u32,
    pub backoff: u32,
    pub phase: CsmaPhase,
    /// Consecutive idle ticks sensed, including the current one.
    pub idle_run: u32,
    pub txop_budget_us: u32,
    slot_elapsed: u32,
    ack_wait: u32,
    ack_ok: bool,
    timing: MacTiming,
}

impl CsmaContext {
    pub fn new(timing: MacTiming) -> Self {
        Self {
            cw: timing.cw_min,
            backoff: 0,
            phase: CsmaPhase::Idle,
            idle_run: 0,
            txop_budget_us: timing.txop_us,
            slot_elapsed: 0,
            ack_wait: 0,
            ack_ok: false,
            timing,
        }
    }

    /// One tick. `idle` is this tick's CCA; `backlogged` whether a file waits.
    pub fn step<R: Rng + ?Sized>(&mut self, idle: bool, backlogged: bool, rng: &mut R) -> CsmaAction {
        if self.phase == CsmaPhase::Tx {
            return CsmaAction::None;
        }
        self.idle_run = if idle { self.idle_run.saturating_add(1) } else { 0 };
        match self.phase {
            CsmaPhase::Tx => CsmaAction::None,
            CsmaPhase::Idle => {
                if !backlogged {
                    return CsmaAction::None;
                }
                if self.idle_run >= self.timing.difs_us {
                    self.phase = CsmaPhase::Tx;
                    return CsmaAction::StartTx;
                }
                self.backoff = MacTiming::draw_backoff(self.cw, rng);
                self.phase = CsmaPhase::Difs;
                CsmaAction::None
            }
            CsmaPhase::AwaitAck => {
                self.ack_wait = self.ack_wait.saturating_sub(1);
                if self.ack_wait > 0 {
                    return CsmaAction::None;
                }
                self.cw = if self.ack_ok { self.timing.cw_min } else { self.timing.grow_cw(self.cw) };
                if !backlogged {
                    self.phase = CsmaPhase::Idle;
                    return CsmaAction::None;
                }
                self.backoff = MacTiming::draw_backoff(self.cw, rng);
                self.phase = CsmaPhase::Difs;
                self.check_difs()
            }
            CsmaPhase::Difs | CsmaPhase::Frozen => {
                if !backlogged {
                    self.phase = CsmaPhase::Idle;
                    return CsmaAction::None;
                }
                self.check_difs()
            }
            CsmaPhase::Backoff => {
                if !backlogged {
                    self.phase = CsmaPhase::Idle;
                    return CsmaAction::None;
                }
                if !idle {
                    self.phase = CsmaPhase::Frozen;
                    self.slot_elapsed = 0;
                    return CsmaAction::None;
                }
                self.slot_elapsed += 1;
                if self.slot_elapsed == self.timing.slot_us {
                    self.slot_elapsed = 0;
                    self.backoff -= 1;
                }
                if self.backoff == 0 {
                    self.phase = CsmaPhase::Tx;
                    CsmaAction::StartTx
                } else {
                    CsmaAction::None
                }
            }
        }
    }

    fn check_difs(&mut self) -> CsmaAction {
        if self.idle_run < self.timing.difs_us {
            return CsmaAction::None;
        }
        self.slot_elapsed = 0;
        if self.backoff == 0 {
            self.phase = CsmaPhase::Tx;
            CsmaAction::StartTx
        } else {
            self.phase = CsmaPhase::Backoff;
            CsmaAction::None
        }
    }

    /// Ticks that [`step`](Self::step) would spend purely counting under a
    /// constant CCA input, before any action or phase change.
    pub fn quiescent_ticks(&self, idle: bool, backlogged: bool) -> u64 {
        match self.phase {
            CsmaPhase::Tx => u64::MAX,
            CsmaPhase::Idle => {
                if backlogged {
                    0
                } else {
                    u64::MAX
                }
            }
            CsmaPhase::AwaitAck => self.ack_wait.saturating_sub(1) as u64,
            CsmaPhase::Difs | CsmaPhase::Frozen => {
                if !backlogged {
                    0
                } else if !idle {
                    u64::MAX
                } else {
                    (self.timing.difs_us.saturating_sub(self.idle_run).max(1) - 1) as u64
                }
            }
            CsmaPhase::Backoff => {
                if !backlogged || !idle || self.backoff == 0 {
                    0
                } else {
                    (self.backoff * self.timing.slot_us - self.slot_elapsed - 1) as u64
                }
            }
        }
    }

    /// Applies `ticks` pure-counting steps; `ticks` must not exceed
    /// [`quiescent_ticks`](Self::quiescent_ticks) for the same input.
    pub fn advance(&mut self, ticks: u64, idle: bool) {
        if ticks == 0 || self.phase == CsmaPhase::Tx {
            return;
        }
        let k = ticks.min(u32::MAX as u64) as u32;
        self.idle_run = if idle { self.idle_run.saturating_add(k) } else { 0 };
        match self.phase {
            CsmaPhase::AwaitAck => self.ack_wait -= k,
            CsmaPhase::Backoff => {
                let total = self.slot_elapsed + k;
                self.backoff -= total / self.timing.slot_us;
                self.slot_elapsed = total % self.timing.slot_us;
            }
            _ => {}
        }
    }

    /// Own data emission ended; the ACK (if any) arrives SIFS + ACK later.
    pub fn on_tx_end(&mut self, decoded: bool) {
        self.phase = CsmaPhase::AwaitAck;
        self.ack_wait = self.timing.sifs_us + self.timing.ack_us;
        self.ack_ok = decoded;
        self.idle_run = 0;
    }

    /// Transmission cut short (its file expired).
    pub fn abort(&mut self) {
        self.phase = CsmaPhase::Idle;
        self.idle_run = 0;
        self.slot_elapsed = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> CsmaContext {
        CsmaContext::new(MacTiming::default())
    }

    #[test]
    fn immediate_access_after_long_idle() {
        let mut c = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..40 {
            assert_eq!(c.step(true, false, &mut rng), CsmaAction::None);
        }
        assert_eq!(c.step(true, true, &mut rng), CsmaAction::StartTx);
        assert_eq!(c.phase, CsmaPhase::Tx);
    }

    #[test]
    fn busy_arrival_defers_then_backs_off() {
        let mut c = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(c.step(false, true, &mut rng), CsmaAction::None);
        assert_eq!(c.phase, CsmaPhase::Difs);
        let n = c.backoff;
        let mut ticks = 0;
        loop {
            ticks += 1;
            if c.step(true, true, &mut rng) == CsmaAction::StartTx {
                break;
            }
            assert!(ticks < 100_000);
        }
        assert_eq!(ticks, 34 + 9 * n);
    }

    #[test]
    fn busy_tick_freezes_and_needs_fresh_difs() {
        let mut c = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        c.step(false, true, &mut rng);
        c.backoff = 5;
        for _ in 0..34 + 9 * 2 {
            c.step(true, true, &mut rng);
        }
        assert_eq!(c.phase, CsmaPhase::Backoff);
        assert_eq!(c.backoff, 3);
        c.step(false, true, &mut rng);
        assert_eq!(c.phase, CsmaPhase::Frozen);
        assert_eq!(c.backoff, 3);
        for _ in 0..33 {
            c.step(true, true, &mut rng);
        }
        assert_eq!(c.phase, CsmaPhase::Frozen);
        c.step(true, true, &mut rng);
        assert_eq!(c.phase, CsmaPhase::Backoff);
        let mut ticks = 0;
        while c.step(true, true, &mut rng) != CsmaAction::StartTx {
            ticks += 1;
        }
        assert_eq!(ticks + 1, 27);
    }

    #[test]
    fn backoff_draw_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0u32; 17];
        let n = 100_000;
        for _ in 0..n {
            counts[MacTiming::draw_backoff(16, &mut rng) as usize] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 1.0 / 17.0).abs() < 0.01, "frequency {f}");
        }
    }

    #[test]
    fn contention_window_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = ctx();
        c.cw = 1024;
        c.phase = CsmaPhase::Tx;
        c.on_tx_end(false);
        for _ in 0..48 {
            c.step(true, true, &mut rng);
        }
        assert_eq!(c.cw, 1024);
        c.phase = CsmaPhase::Tx;
        c.on_tx_end(true);
        for _ in 0..48 {
            c.step(true, true, &mut rng);
        }
        assert_eq!(c.cw, 16);
        c.phase = CsmaPhase::Tx;
        c.on_tx_end(false);
        for _ in 0..48 {
            c.step(true, true, &mut rng);
        }
        assert_eq!(c.cw, 32);
    }

    fn arb_ctx() -> impl Strategy<Value = CsmaContext> {
        (0usize..5, 0u32..40, 0u32..60, 0u32..9, 1u32..49, any::<bool>()).prop_map(
            |(phase, backoff, idle_run, slot, wait, ok)| {
                let mut c = CsmaContext::new(MacTiming::default());
                c.phase = [
                    CsmaPhase::Idle,
                    CsmaPhase::Difs,
                    CsmaPhase::Backoff,
                    CsmaPhase::Frozen,
                    CsmaPhase::AwaitAck,
                ][phase];
                c.backoff = if c.phase == CsmaPhase::Backoff { backoff.max(1) } else { backoff };
                c.idle_run = if matches!(c.phase, CsmaPhase::Difs | CsmaPhase::Frozen) {
                    idle_run.min(33)
                } else {
                    idle_run
                };
                c.slot_elapsed = slot;
                c.ack_wait = wait;
                c.ack_ok = ok;
                c
            },
        )
    }

    proptest! {
        #[test]
        fn bulk_advance_matches_single_steps(c in arb_ctx(), idle in any::<bool>(), backlogged in any::<bool>(), cut in 0u64..400) {
            let q = c.quiescent_ticks(idle, backlogged);
            let k = q.min(cut);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut stepped = c.clone();
            for _ in 0..k {
                prop_assert_eq!(stepped.step(idle, backlogged, &mut rng), CsmaAction::None);
            }
            let mut bulk = c.clone();
            bulk.advance(k, idle);
            prop_assert_eq!(&bulk, &stepped);
            // The tick right after a full quiescent run must change something.
            if q < 400 && k == q {
                let before = stepped.clone();
                let act = stepped.step(idle, backlogged, &mut rng);
                prop_assert!(act != CsmaAction::None || stepped.phase != before.phase);
            }
        }

        #[test]
        fn backoff_never_negative_or_decremented_when_busy(seed in 0u64..1000, pattern in prop::collection::vec(any::<bool>(), 1..600)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut c = CsmaContext::new(MacTiming::default());
            for idle in pattern {
                let before = c.clone();
                let act = c.step(idle, true, &mut rng);
                if !idle && before.phase == CsmaPhase::Backoff {
                    prop_assert_eq!(c.backoff, before.backoff);
                }
                if act == CsmaAction::StartTx {
                    prop_assert!(idle);
                    c.on_tx_end(true);
                }
                prop_assert!(c.backoff <= c.cw);
            }
        }
    }
}
