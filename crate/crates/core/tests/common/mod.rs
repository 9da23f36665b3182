//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use nru_coex::channel::LinkGainTable;
use nru_coex::mac::UplinkMode;
use nru_coex::scenario::Topology;
use nru_coex::simcore::{SimConfig, SimStats, Simulator};

/// Full-buffer configuration: every terminal starts with a deep queue, no
/// further arrivals, and nothing ever expires.
pub fn saturated(uplink: UplinkMode) -> SimConfig {
    SimConfig {
        uplink,
        initial_backlog: 400,
        horizon_intervals: 0,
        deadline_us: u64::MAX / 4,
        ..SimConfig::default()
    }
}

/// Runs a constructed geometry for `seconds` under one ED threshold for
/// both networks.
pub fn run_constructed(geometry: (Topology, LinkGainTable), config: SimConfig, ed_dbm: f64, seconds: u64, seed: u64) -> SimStats {
    let (topology, gains) = geometry;
    let mut sim = Simulator::with_gains(config, topology, gains).expect("valid construction");
    sim.reset(seed).expect("reset");
    for _ in 0..seconds * 10 {
        sim.step_interval(ed_dbm, ed_dbm);
    }
    sim.stats().clone()
}

pub fn mbps(bits: f64, seconds: u64) -> f64 {
    bits / seconds as f64 / 1e6
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Rows of a fixture CSV, header skipped.
pub fn fixture_rows(name: &str) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(fixture(name)).expect("fixture present");
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

pub fn rel_err(actual: f64, expected: f64) -> f64 {
    if expected == 0.0 {
        actual.abs()
    } else {
        ((actual - expected) / expected).abs()
    }
}

/// Closed-form saturated WiFi rate: one TXOP of payload per cycle of
/// DIFS + mean initial backoff + TXOP + SIFS + ACK.
pub fn wifi_saturated_oracle(config: &SimConfig) -> f64 {
    let t = &config.timing;
    let mean_backoff = (t.cw_min as f64 / 2.0) * t.slot_us as f64;
    let cycle = t.difs_us as f64 + mean_backoff + t.txop_us as f64 + t.sifs_us as f64 + t.ack_us as f64;
    t.txop_us as f64 * config.wifi_rate / cycle
}

/// Closed-form saturated NR-U rate with Cat4 at both ends: gNB defer and
/// mean backoff, mean reservation padding to the next mini-slot, PDCCH,
/// then the UE's own defer, mean backoff and padding inside an MCOT whose
/// data part is the MCOT minus the padding, followed by the gap and ACK.
pub fn nru_cat4_oracle(config: &SimConfig) -> f64 {
    let t = &config.timing;
    let mean_backoff = (t.cw_min as f64 / 2.0) * t.slot_us as f64;
    let mean_rs = t.mini_slot_us as f64 / 2.0;
    let gnb = t.defer_us as f64 + mean_backoff + mean_rs + t.pdcch_us as f64;
    let ue = t.defer_us as f64 + mean_backoff + t.mcot_us as f64 + t.cat1_gap_us as f64 + t.ack_us as f64;
    (t.mcot_us as f64 - mean_rs) * config.nru_rate / (gnb + ue)
}
