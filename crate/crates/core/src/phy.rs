//! Sensing (carrier sense and energy detection), clear-channel assessment
//! and SINR-based decoding over the set of active emissions.
//!
//! All sums are linear in mW; thresholds are held in dBm and converted once
//! per decision interval via [`Thresholds::linear`].

use crate::scenario::{Network, Role};
use crate::units::{db_to_linear, dbm_to_mw, linear_to_db};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmissionKind {
    Data,
    /// NR-U reservation signal filling the gap up to a mini-slot boundary.
    Rs,
    Ack,
    Pdcch,
}

/// One active emission.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionEvent {
    pub source: usize,
    pub role: Role,
    pub power_mw: f64,
    pub start_us: u64,
    /// Exclusive.
    pub end_us: u64,
    pub kind: EmissionKind,
    pub receiver: Option<usize>,
    /// Worst SINR seen by the receiver so far (Data only).
    pub min_sinr_db: f64,
}

impl TransmissionEvent {
    pub fn new(source: usize, role: Role, power_dbm: f64, start_us: u64, end_us: u64, kind: EmissionKind) -> Self {
        debug_assert!(end_us > start_us, "emission must last at least one tick");
        Self {
            source,
            role,
            power_mw: dbm_to_mw(power_dbm),
            start_us,
            end_us,
            kind,
            receiver: None,
            min_sinr_db: f64::INFINITY,
        }
    }

    pub fn to(mut self, receiver: usize) -> Self {
        self.receiver = Some(receiver);
        self
    }

    pub fn is_active(&self, tick: u64) -> bool {
        self.start_us <= tick && tick < self.end_us
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub cs_wifi_dbm: f64,
    pub ed_wifi_dbm: f64,
    pub ed_nru_dbm: f64,
    pub sinr_wifi_db: f64,
    pub sinr_nru_db: f64,
    pub noise_dbm: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            cs_wifi_dbm: -82.0,
            ed_wifi_dbm: -62.0,
            ed_nru_dbm: -72.0,
            sinr_wifi_db: 9.0,
            sinr_nru_db: 5.5,
            noise_dbm: -104.0,
        }
    }
}

impl Thresholds {
    pub fn with_ed(ed_wifi_dbm: f64, ed_nru_dbm: f64) -> Self {
        Self {
            ed_wifi_dbm,
            ed_nru_dbm,
            ..Self::default()
        }
    }

    pub fn linear(&self) -> LinearThresholds {
        LinearThresholds {
            cs_wifi_mw: dbm_to_mw(self.cs_wifi_dbm),
            ed_wifi_mw: dbm_to_mw(self.ed_wifi_dbm),
            ed_nru_mw: dbm_to_mw(self.ed_nru_dbm),
        }
    }

    pub fn sinr_threshold_db(&self, network: Network) -> f64 {
        match network {
            Network::Wifi => self.sinr_wifi_db,
            Network::Nru => self.sinr_nru_db,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearThresholds {
    pub cs_wifi_mw: f64,
    pub ed_wifi_mw: f64,
    pub ed_nru_mw: f64,
}

/// Which emissions a WiFi device's carrier sense picks up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensingConfig {
    /// Count AP (ACK) emissions in the CS sum alongside STAs.
    pub ap_in_cs: bool,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self { ap_in_cs: true }
    }
}

fn received<'a, G>(i: usize, active: &'a [TransmissionEvent], gain: &'a G) -> impl Iterator<Item = (Role, f64)> + 'a
where
    G: Fn(usize, usize) -> f64,
{
    active
        .iter()
        .filter(move |e| e.source != i)
        .map(move |e| (e.role, e.power_mw * gain(e.source, i)))
}

/// WiFi preamble-detectable power at `i`: other transmitting STAs (and APs
/// if configured).
pub fn cs_level_wifi<G>(i: usize, active: &[TransmissionEvent], gain: &G, cfg: SensingConfig) -> f64
where
    G: Fn(usize, usize) -> f64,
{
    received(i, active, gain)
        .filter(|(role, _)| *role == Role::Sta || (cfg.ap_in_cs && *role == Role::Ap))
        .map(|(_, p)| p)
        .sum()
}

/// Total energy seen by a WiFi device: STAs, UEs and gNBs other than itself.
pub fn ed_level_wifi<G>(i: usize, active: &[TransmissionEvent], gain: &G) -> f64
where
    G: Fn(usize, usize) -> f64,
{
    received(i, active, gain)
        .filter(|(role, _)| matches!(role, Role::Sta | Role::Ue | Role::Gnb))
        .map(|(_, p)| p)
        .sum()
}

/// Total energy seen by an NR-U device: STAs, other UEs and other gNBs.
pub fn ed_level_nru<G>(i: usize, active: &[TransmissionEvent], gain: &G) -> f64
where
    G: Fn(usize, usize) -> f64,
{
    ed_level_wifi(i, active, gain)
}

pub fn cca_wifi(cs_mw: f64, ed_mw: f64, th: &LinearThresholds) -> bool {
    cs_mw < th.cs_wifi_mw && ed_mw < th.ed_wifi_mw
}

pub fn cca_nru(ed_mw: f64, th: &LinearThresholds) -> bool {
    ed_mw < th.ed_nru_mw
}

/// CCA for any device given the emission set of the previous tick.
pub fn cca<G>(i: usize, role: Role, active: &[TransmissionEvent], gain: &G, cfg: SensingConfig, th: &LinearThresholds) -> bool
where
    G: Fn(usize, usize) -> f64,
{
    match role.network() {
        Network::Wifi => cca_wifi(cs_level_wifi(i, active, gain, cfg), ed_level_wifi(i, active, gain), th),
        Network::Nru => cca_nru(ed_level_nru(i, active, gain), th),
    }
}

/// SINR in dB of `tx`'s emission at `rx`, with every other active emission
/// as interference.
pub fn sinr<G>(tx: usize, rx: usize, active: &[TransmissionEvent], gain: &G, noise_mw: f64) -> f64
where
    G: Fn(usize, usize) -> f64,
{
    let mut signal = 0.0;
    let mut interference = noise_mw;
    for e in active {
        if e.source == rx {
            continue;
        }
        let p = e.power_mw * gain(e.source, rx);
        if e.source == tx {
            signal += p;
        } else {
            interference += p;
        }
    }
    linear_to_db(signal / interference)
}

/// Worst-tick decoding rule.
pub fn decode(min_sinr_db: f64, threshold_db: f64) -> bool {
    min_sinr_db >= threshold_db
}

/// Updates the running worst SINR of every active Data emission.
pub fn update_min_sinr<G>(active: &mut [TransmissionEvent], gain: &G, noise_mw: f64)
where
    G: Fn(usize, usize) -> f64,
{
    for k in 0..active.len() {
        if active[k].kind != EmissionKind::Data {
            continue;
        }
        let Some(rx) = active[k].receiver else { continue };
        let s = sinr(active[k].source, rx, active, gain, noise_mw);
        if s < active[k].min_sinr_db {
            active[k].min_sinr_db = s;
        }
    }
}

/// Linear SINR threshold helper for callers that prefer ratios.
pub fn sinr_ratio(threshold_db: f64) -> f64 {
    db_to_linear(threshold_db)
}
