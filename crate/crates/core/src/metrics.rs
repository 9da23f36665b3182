//! Per-interval success counters, throughput and user-perceived throughput
//! accounting.

use std::collections::VecDeque;

use crate::scenario::Network;
use crate::traffic::{FileJob, JobState};

/// Successful file deliveries during one decision interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TtiCounters {
    pub interval: u64,
    pub n_wifi: u64,
    pub n_nru: u64,
    pub drops_wifi: u64,
    pub drops_nru: u64,
}

impl TtiCounters {
    pub fn new(interval: u64) -> Self {
        Self {
            interval,
            ..Self::default()
        }
    }

    pub fn count(&self, network: Network) -> u64 {
        match network {
            Network::Wifi => self.n_wifi,
            Network::Nru => self.n_nru,
        }
    }

    pub fn record_completion(&mut self, network: Network) {
        match network {
            Network::Wifi => self.n_wifi += 1,
            Network::Nru => self.n_nru += 1,
        }
    }

    pub fn record_drop(&mut self, network: Network) {
        match network {
            Network::Wifi => self.drops_wifi += 1,
            Network::Nru => self.drops_nru += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileOutcome {
    Done,
    Unfinished,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UptRecord {
    pub network: Network,
    pub tput_mbps: f64,
    pub outcome: FileOutcome,
}

impl UptRecord {
    /// Builds the record for a finished, dropped, or (at `end_us`) still
    /// pending file.
    pub fn from_job(job: &FileJob, network: Network, end_us: u64) -> Self {
        let (tput_mbps, outcome) = match job.state {
            JobState::Dropped => (0.0, FileOutcome::Dropped),
            JobState::Done => {
                let dep = job.departure_us.expect("done job has a departure time");
                (job.size_bits / (dep.saturating_sub(job.arrival_us).max(1)) as f64, FileOutcome::Done)
            }
            JobState::Queued | JobState::InService => {
                let age = end_us.saturating_sub(job.arrival_us).max(1) as f64;
                (job.served_bits / age, FileOutcome::Unfinished)
            }
        };
        Self {
            network,
            tput_mbps,
            outcome,
        }
    }
}

/// Mean per-file throughput; `None` when no file arrived.
pub fn upt<'a, I>(records: I) -> Option<f64>
where
    I: IntoIterator<Item = &'a UptRecord>,
{
    let (sum, n) = records.into_iter().fold((0.0, 0usize), |(s, n), r| (s + r.tput_mbps, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Delivered-file throughput in Mbps over a window of `window_s` seconds.
pub fn throughput_mbps(files: u64, file_bits: f64, window_s: f64) -> f64 {
    if window_s <= 0.0 {
        return 0.0;
    }
    files as f64 * file_bits / window_s / 1e6
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    pub wifi_mbps: f64,
    pub nru_mbps: f64,
}

impl Throughput {
    pub fn system_mbps(&self) -> f64 {
        self.wifi_mbps + self.nru_mbps
    }
}

pub fn interval_throughput(counters: &[TtiCounters], file_bits: f64, interval_s: f64) -> Throughput {
    let window = counters.len() as f64 * interval_s;
    let w: u64 = counters.iter().map(|c| c.n_wifi).sum();
    let n: u64 = counters.iter().map(|c| c.n_nru).sum();
    Throughput {
        wifi_mbps: throughput_mbps(w, file_bits, window),
        nru_mbps: throughput_mbps(n, file_bits, window),
    }
}

/// Sliding throughput over the last `len` intervals.
#[derive(Debug, Clone)]
pub struct SlidingWindow {
    len: usize,
    buf: VecDeque<TtiCounters>,
}

impl SlidingWindow {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "window must hold at least one interval");
        Self {
            len,
            buf: VecDeque::with_capacity(len),
        }
    }

    /// Window length covering `window_s` seconds of `interval_s` intervals.
    pub fn covering(window_s: f64, interval_s: f64) -> Self {
        Self::new(((window_s / interval_s).round() as usize).max(1))
    }

    pub fn push(&mut self, c: TtiCounters) {
        if self.buf.len() == self.len {
            self.buf.pop_front();
        }
        self.buf.push_back(c);
    }

    pub fn throughput(&self, file_bits: f64, interval_s: f64) -> Throughput {
        let v: Vec<_> = self.buf.iter().copied().collect();
        interval_throughput(&v, file_bits, interval_s)
    }
}

/// One row of the test-phase time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeseriesRow {
    pub time_s: f64,
    pub wifi_tput_mbps: f64,
    pub nru_tput_mbps: f64,
    pub ed_wifi_dbm: f64,
    pub ed_nru_dbm: f64,
    pub drops_wifi: u64,
    pub drops_nru: u64,
}

impl TimeseriesRow {
    pub const HEADER: &'static str = "time_s,wifi_tput_mbps,nru_tput_mbps,sys_tput_mbps,ed_wifi_dbm,ed_nru_dbm,drops_wifi,drops_nru";

    pub fn to_csv(&self) -> String {
        format!(
            "{:.3},{:.6},{:.6},{:.6},{},{},{},{}",
            self.time_s,
            self.wifi_tput_mbps,
            self.nru_tput_mbps,
            self.wifi_tput_mbps + self.nru_tput_mbps,
            self.ed_wifi_dbm,
            self.ed_nru_dbm,
            self.drops_wifi,
            self.drops_nru
        )
    }
}

/// Final per-network figures of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub wifi_tput_mbps: f64,
    pub nru_tput_mbps: f64,
    pub wifi_upt_mbps: Option<f64>,
    pub nru_upt_mbps: Option<f64>,
}

impl Summary {
    pub fn system_tput_mbps(&self) -> f64 {
        self.wifi_tput_mbps + self.nru_tput_mbps
    }
}
