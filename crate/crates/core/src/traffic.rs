//! Uplink file traffic: FTP model 3 (Poisson file arrivals), a
//! Beta-modulated bursty variant, and per-device FCFS queues with a hard
//! delivery deadline.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use statrs::distribution::{Beta, Continuous};

use crate::{Error, Result};

/// 0.5 Mbyte.
pub const FILE_SIZE_BITS: f64 = 4.0e6;
/// Files older than this are dropped.
pub const DEADLINE_US: u64 = 8_000_000;
pub const DEFAULT_ARRIVAL_RATE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobState {
    Queued,
    InService,
    Done,
    Dropped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileJob {
    pub id: u64,
    pub device: usize,
    pub size_bits: f64,
    pub arrival_us: u64,
    pub served_bits: f64,
    pub departure_us: Option<u64>,
    pub state: JobState,
}

impl FileJob {
    pub fn new(id: u64, device: usize, size_bits: f64, arrival_us: u64) -> Self {
        Self {
            id,
            device,
            size_bits,
            arrival_us,
            served_bits: 0.0,
            departure_us: None,
            state: JobState::Queued,
        }
    }

    pub fn remaining_bits(&self) -> f64 {
        (self.size_bits - self.served_bits).max(0.0)
    }

    /// Credits delivered bits; returns true when the file just completed.
    pub fn serve(&mut self, bits: f64, now_us: u64) -> bool {
        if matches!(self.state, JobState::Done | JobState::Dropped) {
            return false;
        }
        self.served_bits = (self.served_bits + bits).min(self.size_bits);
        if self.served_bits >= self.size_bits {
            self.served_bits = self.size_bits;
            self.state = JobState::Done;
            self.departure_us = Some(now_us);
            true
        } else {
            false
        }
    }

    pub fn expired(&self, now_us: u64, deadline_us: u64) -> bool {
        now_us.saturating_sub(self.arrival_us) > deadline_us
    }
}

#[derive(Debug, Clone, Default)]
pub struct DeviceQueue {
    jobs: VecDeque<FileJob>,
    next_id: u64,
}

impl DeviceQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_arrival(&mut self, device: usize, size_bits: f64, arrival_us: u64) {
        debug_assert!(self.jobs.back().map_or(true, |j| j.arrival_us <= arrival_us));
        let job = FileJob::new(self.next_id, device, size_bits, arrival_us);
        self.next_id += 1;
        self.jobs.push_back(job);
    }

    pub fn head(&self) -> Option<&FileJob> {
        self.jobs.front()
    }

    pub fn head_mut(&mut self) -> Option<&mut FileJob> {
        self.jobs.front_mut()
    }

    pub fn is_backlogged(&self) -> bool {
        !self.jobs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FileJob> {
        self.jobs.iter()
    }

    /// Removes the head once it is done.
    pub fn pop_done(&mut self) -> Option<FileJob> {
        if self.jobs.front().map(|j| j.state == JobState::Done).unwrap_or(false) {
            self.jobs.pop_front()
        } else {
            None
        }
    }

    /// Earliest tick at which the head would be dropped.
    pub fn next_drop_us(&self, deadline_us: u64) -> Option<u64> {
        self.jobs.front().map(|j| j.arrival_us + deadline_us + 1)
    }

    /// Total files ever enqueued.
    pub fn arrivals(&self) -> u64 {
        self.next_id
    }
}

/// Drops every job whose age exceeds the deadline, returning them in
/// queue order. Queues are FCFS so expired jobs always form a prefix.
pub fn advance_queues(now_us: u64, queues: &mut [DeviceQueue], deadline_us: u64) -> Vec<FileJob> {
    let mut dropped = Vec::new();
    for q in queues.iter_mut() {
        while q.jobs.front().map(|j| j.expired(now_us, deadline_us)).unwrap_or(false) {
            let mut job = q.jobs.pop_front().expect("front exists");
            job.state = JobState::Dropped;
            dropped.push(job);
        }
    }
    dropped
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrafficModel {
    Ftp3,
    /// Poisson intensity shaped by a Beta(alpha, beta) density over the horizon.
    Beta { alpha: f64, beta: f64 },
}

impl TrafficModel {
    pub fn beta_default() -> Self {
        TrafficModel::Beta { alpha: 3.0, beta: 4.0 }
    }

    pub fn generate<R: Rng + ?Sized>(&self, rate: f64, horizon_s: f64, rng: &mut R) -> Result<Vec<f64>> {
        match *self {
            TrafficModel::Ftp3 => generate_ftp3(rate, horizon_s, rng),
            TrafficModel::Beta { alpha, beta } => generate_beta(rate, horizon_s, alpha, beta, rng),
        }
    }
}

/// Poisson arrival times (seconds) on `[0, horizon_s)`.
pub fn generate_ftp3<R: Rng + ?Sized>(rate: f64, horizon_s: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::Config(format!("arrival rate must be positive, got {rate}")));
    }
    let gaps = Exp::new(rate).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += gaps.sample(rng);
        if t >= horizon_s {
            break;
        }
        out.push(t);
    }
    Ok(out)
}

/// Inhomogeneous Poisson arrivals with intensity `rate * pdf(t / horizon)`,
/// drawn by thinning. The density integrates to one on [0, 1], so the
/// expected count is `rate * horizon_s`.
pub fn generate_beta<R: Rng + ?Sized>(
    rate: f64,
    horizon_s: f64,
    alpha: f64,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::Config(format!("arrival rate must be positive, got {rate}")));
    }
    if !(alpha >= 1.0 && beta >= 1.0 && alpha + beta > 2.0) {
        return Err(Error::Config(format!(
            "beta traffic needs alpha, beta >= 1 with a bounded density, got ({alpha}, {beta})"
        )));
    }
    if !(horizon_s > 0.0) {
        return Ok(Vec::new());
    }
    let density = Beta::new(alpha, beta).map_err(|e| Error::Config(e.to_string()))?;
    let peak = density.pdf(beta_mode(alpha, beta));
    let envelope = rate * peak;
    let candidates = generate_ftp3(envelope, horizon_s, rng)?;
    Ok(candidates
        .into_iter()
        .filter(|&t| rng.random::<f64>() * peak < density.pdf(t / horizon_s))
        .collect())
}

pub fn beta_mode(alpha: f64, beta: f64) -> f64 {
    (alpha - 1.0) / (alpha + beta - 2.0)
}

/// Instantaneous Beta-modulated intensity (files/s) at time `t_s`.
pub fn beta_intensity(rate: f64, horizon_s: f64, alpha: f64, beta: f64, t_s: f64) -> Result<f64> {
    let density = Beta::new(alpha, beta).map_err(|e| Error::Config(e.to_string()))?;
    Ok(rate * density.pdf((t_s / horizon_s).clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ftp3_count_matches_poisson_mean() {
        let mut total = 0usize;
        for seed in 0..20 {
            let n = generate_ftp3(2.0, 250.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().len();
            assert!((450..=550).contains(&n), "seed {seed}: {n}");
            total += n;
        }
        let mean = total as f64 / 20.0;
        assert!((mean - 500.0).abs() < 15.0);
    }

    #[test]
    fn ftp3_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(generate_ftp3(2.0, 0.0, &mut rng).unwrap().is_empty());
        assert!(generate_ftp3(0.0, 10.0, &mut rng).is_err());
        assert!(generate_ftp3(-1.0, 10.0, &mut rng).is_err());
        let a = generate_ftp3(2.0, 50.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = generate_ftp3(2.0, 50.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn beta_traffic_shape_and_volume() {
        assert!((beta_mode(3.0, 4.0) - 0.4).abs() < 1e-12);
        let horizon = 100.0;
        let mut total = 0usize;
        let mut bins = [0usize; 10];
        for seed in 0..200 {
            let times = generate_beta(2.0, horizon, 3.0, 4.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            total += times.len();
            for t in times {
                bins[((t / horizon) * 10.0) as usize] += 1;
            }
        }
        let mean = total as f64 / 200.0;
        // Same expected volume as FTP-3 at the same base rate: 200 files.
        assert!((mean - 200.0).abs() < 4.0, "mean count {mean}");
        let peak_bin = bins.iter().enumerate().max_by_key(|(_, c)| **c).unwrap().0;
        assert!(peak_bin == 3 || peak_bin == 4, "bins {bins:?}");
        assert!(generate_beta(2.0, 0.0, 3.0, 4.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap().is_empty());
        assert!(generate_beta(0.0, 1.0, 3.0, 4.0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn deadline_boundary() {
        let mut queues = vec![DeviceQueue::new()];
        queues[0].push_arrival(0, FILE_SIZE_BITS, 0);
        assert!(advance_queues(8_000_000, &mut queues, DEADLINE_US).is_empty());
        let dropped = advance_queues(8_001_000, &mut queues, DEADLINE_US);
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].state, JobState::Dropped);
        assert!(queues[0].is_empty());
        assert!(advance_queues(9_000_000, &mut queues, DEADLINE_US).is_empty());
    }

    #[test]
    fn in_service_job_is_dropped_too() {
        let mut queues = vec![DeviceQueue::new()];
        queues[0].push_arrival(0, FILE_SIZE_BITS, 10);
        queues[0].push_arrival(0, FILE_SIZE_BITS, 20);
        queues[0].head_mut().unwrap().state = JobState::InService;
        queues[0].head_mut().unwrap().serve(1e6, 100);
        let dropped = advance_queues(DEADLINE_US + 15, &mut queues, DEADLINE_US);
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].served_bits, 1e6);
        assert_eq!(queues[0].head().unwrap().arrival_us, 20);
    }

    #[test]
    fn serve_completes_exactly() {
        let mut job = FileJob::new(0, 3, 1000.0, 0);
        assert!(!job.serve(600.0, 5));
        assert!(job.serve(600.0, 9));
        assert_eq!(job.served_bits, 1000.0);
        assert_eq!(job.departure_us, Some(9));
        assert!(!job.serve(1.0, 10));
    }
}
