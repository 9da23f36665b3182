//! Experiment runner: flat `key = value` configuration with presets, the
//! fixed-threshold baseline and the three learning pipelines, the frozen
//! policy test phase, and the CSV artifacts they produce.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::federated::{FedReward, FederatedPair, RoundLog};
use crate::mac::UplinkMode;
use crate::metrics::{interval_throughput, upt, SlidingWindow, Summary, TimeseriesRow, TtiCounters, UptRecord};
use crate::rl::env::{train_episode, Agent, CoexEnv, RewardMode};
use crate::rl::{ActionSpace, Arch, DdqnAgent, DdqnConfig, EpsilonSchedule, TabularAgent, TargetMode};
use crate::scenario::{Network, ScenarioConfig};
use crate::simcore::{SimConfig, Simulator};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    BaselineFixed,
    Tabular,
    CentralizedDdqn,
    FederatedDdqn,
}

impl Mode {
    pub fn learns(self) -> bool {
        self != Mode::BaselineFixed
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::BaselineFixed => "baseline-fixed",
            Mode::Tabular => "tabular",
            Mode::CentralizedDdqn => "centralized-ddqn",
            Mode::FederatedDdqn => "federated-ddqn",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline-fixed" => Ok(Mode::BaselineFixed),
            "tabular" => Ok(Mode::Tabular),
            "centralized-ddqn" => Ok(Mode::CentralizedDdqn),
            "federated-ddqn" => Ok(Mode::FederatedDdqn),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// One cell per network, two terminals each, 30 s episodes.
    Desk,
    /// Three cells per network, five terminals each, 250 s episodes.
    Full,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Full => "full",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Gru,
    Mlp,
}

impl fmt::Display for NetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetKind::Gru => "gru",
            NetKind::Mlp => "mlp",
        })
    }
}

impl FromStr for NetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(NetKind::Gru),
            "mlp" => Ok(NetKind::Mlp),
            other => Err(Error::Config(format!("unknown network kind '{other}'"))),
        }
    }
}

fn uplink_name(u: UplinkMode) -> &'static str {
    match u {
        UplinkMode::Cat2 => "cat2",
        UplinkMode::Cat4 => "cat4",
    }
}

fn parse_uplink(s: &str) -> Result<UplinkMode> {
    match s {
        "cat2" => Ok(UplinkMode::Cat2),
        "cat4" => Ok(UplinkMode::Cat4),
        other => Err(Error::Config(format!("unknown UE access category '{other}'"))),
    }
}

/// Everything a run needs. Every field has a default, so an empty
/// configuration file runs the fixed-threshold baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub mode: Mode,
    pub seed: u64,
    /// Training episodes (federation rounds in federated mode).
    pub episodes: usize,
    /// Decision intervals per episode.
    pub episode_intervals: usize,
    pub test_episodes: usize,
    pub ue_lbt: UplinkMode,
    pub fairness: bool,
    /// Explicit WiFi throughput floor; measured from the baseline if unset.
    pub t_wifi_mbps: Option<f64>,
    /// Multiplier applied to the measured baseline WiFi throughput.
    pub fairness_scale: f64,
    /// Episodes of the baseline run used to measure the floor.
    pub calibration_episodes: usize,
    pub target_mode: TargetMode,
    pub fed_reward: FedReward,
    pub net: NetKind,
    pub hidden: usize,
    pub window: usize,
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    pub replay_capacity: usize,
    pub target_sync: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of all training steps over which ε is annealed.
    pub eps_fraction: f64,
    pub tabular_eta: f64,
    pub tabular_bins: usize,
    pub baseline_ed_wifi_dbm: f64,
    pub baseline_ed_nru_dbm: f64,
    pub grid_min_dbm: f64,
    pub grid_max_dbm: f64,
    pub grid_step_db: f64,
    pub arrival_rate: f64,
    pub devices_per_cell: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk)
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let desk = preset == Preset::Desk;
        Self {
            preset,
            mode: Mode::BaselineFixed,
            seed: 1,
            episodes: 200,
            episode_intervals: if desk { 300 } else { 2_500 },
            test_episodes: if desk { 5 } else { 1 },
            ue_lbt: UplinkMode::Cat2,
            fairness: false,
            t_wifi_mbps: None,
            fairness_scale: 1.0,
            calibration_episodes: if desk { 5 } else { 1 },
            target_mode: TargetMode::Double,
            fed_reward: FedReward::Shared,
            net: NetKind::Gru,
            hidden: if desk { 16 } else { 64 },
            window: 8,
            gamma: 0.9,
            lr: 1e-4,
            batch: 32,
            replay_capacity: 100_000,
            target_sync: 500,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_fraction: 0.5,
            tabular_eta: 0.01,
            tabular_bins: 4,
            baseline_ed_wifi_dbm: -62.0,
            baseline_ed_nru_dbm: -72.0,
            grid_min_dbm: -82.0,
            grid_max_dbm: -52.0,
            grid_step_db: 3.0,
            arrival_rate: 2.0,
            devices_per_cell: if desk { 2 } else { 5 },
        }
    }

    /// Sets one field from its textual form. `preset` resets every field
    /// to the preset's defaults, so it should come first.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(Error::Config(format!("invalid boolean '{v}' for '{key}'"))),
            }
        }
        let v = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "preset" => *self = Self::preset(v.parse()?),
            "mode" => self.mode = v.parse()?,
            "seed" => self.seed = num(key, v)?,
            "episodes" => self.episodes = num(key, v)?,
            "episode_intervals" => self.episode_intervals = num(key, v)?,
            "test_episodes" => self.test_episodes = num(key, v)?,
            "ue_lbt" => self.ue_lbt = parse_uplink(v)?,
            "fairness" => self.fairness = flag(key, v)?,
            "t_wifi_mbps" => self.t_wifi_mbps = if v.is_empty() || v == "auto" { None } else { Some(num(key, v)?) },
            "fairness_scale" => self.fairness_scale = num(key, v)?,
            "calibration_episodes" => self.calibration_episodes = num(key, v)?,
            "target_mode" => self.target_mode = v.parse()?,
            "fed_reward" => self.fed_reward = v.parse()?,
            "net" => self.net = v.parse()?,
            "hidden" => self.hidden = num(key, v)?,
            "window" => self.window = num(key, v)?,
            "gamma" => self.gamma = num(key, v)?,
            "lr" => self.lr = num(key, v)?,
            "batch" => self.batch = num(key, v)?,
            "replay_capacity" => self.replay_capacity = num(key, v)?,
            "target_sync" => self.target_sync = num(key, v)?,
            "eps_start" => self.eps_start = num(key, v)?,
            "eps_end" => self.eps_end = num(key, v)?,
            "eps_fraction" => self.eps_fraction = num(key, v)?,
            "tabular_eta" => self.tabular_eta = num(key, v)?,
            "tabular_bins" => self.tabular_bins = num(key, v)?,
            "baseline_ed_wifi_dbm" => self.baseline_ed_wifi_dbm = num(key, v)?,
            "baseline_ed_nru_dbm" => self.baseline_ed_nru_dbm = num(key, v)?,
            "grid_min_dbm" => self.grid_min_dbm = num(key, v)?,
            "grid_max_dbm" => self.grid_max_dbm = num(key, v)?,
            "grid_step_db" => self.grid_step_db = num(key, v)?,
            "arrival_rate" => self.arrival_rate = num(key, v)?,
            "devices_per_cell" => self.devices_per_cell = num(key, v)?,
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", no + 1)))?;
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Canonical `key = value` rendering; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("preset", self.preset.to_string());
        kv("mode", self.mode.to_string());
        kv("seed", self.seed.to_string());
        kv("episodes", self.episodes.to_string());
        kv("episode_intervals", self.episode_intervals.to_string());
        kv("test_episodes", self.test_episodes.to_string());
        kv("ue_lbt", uplink_name(self.ue_lbt).to_string());
        kv("fairness", self.fairness.to_string());
        kv("t_wifi_mbps", self.t_wifi_mbps.map_or_else(|| "auto".to_string(), |v| format!("{v:?}")));
        kv("fairness_scale", format!("{:?}", self.fairness_scale));
        kv("calibration_episodes", self.calibration_episodes.to_string());
        kv("target_mode", self.target_mode.to_string());
        kv("fed_reward", self.fed_reward.to_string());
        kv("net", self.net.to_string());
        kv("hidden", self.hidden.to_string());
        kv("window", self.window.to_string());
        kv("gamma", format!("{:?}", self.gamma));
        kv("lr", format!("{:?}", self.lr));
        kv("batch", self.batch.to_string());
        kv("replay_capacity", self.replay_capacity.to_string());
        kv("target_sync", self.target_sync.to_string());
        kv("eps_start", format!("{:?}", self.eps_start));
        kv("eps_end", format!("{:?}", self.eps_end));
        kv("eps_fraction", format!("{:?}", self.eps_fraction));
        kv("tabular_eta", format!("{:?}", self.tabular_eta));
        kv("tabular_bins", self.tabular_bins.to_string());
        kv("baseline_ed_wifi_dbm", format!("{:?}", self.baseline_ed_wifi_dbm));
        kv("baseline_ed_nru_dbm", format!("{:?}", self.baseline_ed_nru_dbm));
        kv("grid_min_dbm", format!("{:?}", self.grid_min_dbm));
        kv("grid_max_dbm", format!("{:?}", self.grid_max_dbm));
        kv("grid_step_db", format!("{:?}", self.grid_step_db));
        kv("arrival_rate", format!("{:?}", self.arrival_rate));
        kv("devices_per_cell", self.devices_per_cell.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode.learns() && self.episodes == 0 {
            return Err(Error::Config(format!("mode {} must train for at least one episode", self.mode)));
        }
        if self.episode_intervals == 0 || self.test_episodes == 0 {
            return Err(Error::Config("episode length and test episodes must be positive".into()));
        }
        if self.fairness && self.t_wifi_mbps.is_none() && self.calibration_episodes == 0 {
            return Err(Error::Config("fairness needs t_wifi_mbps or calibration episodes".into()));
        }
        if self.t_wifi_mbps.is_some_and(|t| !(t >= 0.0)) || !(self.fairness_scale >= 0.0) {
            return Err(Error::Config("fairness floor must be non-negative".into()));
        }
        if self.hidden == 0 || self.window == 0 || self.tabular_bins == 0 || self.devices_per_cell == 0 {
            return Err(Error::Config("sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) || !(0.0..=1.0).contains(&self.eps_fraction) {
            return Err(Error::Config("exploration parameters must lie in [0, 1]".into()));
        }
        self.action_space()?;
        self.sim_config().validate()?;
        Ok(())
    }

    pub fn action_space(&self) -> Result<ActionSpace> {
        ActionSpace::uniform(self.grid_min_dbm, self.grid_max_dbm, self.grid_step_db)
    }

    pub fn sim_config(&self) -> SimConfig {
        let scenario = match self.preset {
            Preset::Desk => ScenarioConfig::desk(),
            Preset::Full => ScenarioConfig::default(),
        };
        SimConfig {
            scenario: ScenarioConfig {
                devices_per_cell: self.devices_per_cell,
                ..scenario
            },
            uplink: self.ue_lbt,
            arrival_rate: self.arrival_rate,
            // One extra interval covers the warm-up step of every episode.
            horizon_intervals: self.episode_intervals as u64 + 1,
            ..SimConfig::default()
        }
    }

    fn arch(&self, features: usize, outputs: usize) -> Arch {
        match self.net {
            NetKind::Gru => Arch::Gru {
                input: features,
                steps: self.window,
                hidden: self.hidden,
                output: outputs,
            },
            NetKind::Mlp => Arch::mlp(vec![features * self.window, self.hidden, self.hidden, outputs]),
        }
    }

    fn ddqn_config(&self, arch: Arch, seed: u64) -> DdqnConfig {
        let total = (self.episodes * self.episode_intervals) as u64;
        DdqnConfig {
            arch,
            gamma: self.gamma,
            lr: self.lr,
            batch: self.batch,
            replay_capacity: self.replay_capacity,
            target_sync: self.target_sync,
            schedule: EpsilonSchedule::over(self.eps_start, self.eps_end, total, self.eps_fraction),
            target_mode: self.target_mode,
            seed,
        }
    }
}

/// Independent seed sequences for the phases of a run.
#[derive(Debug, Clone, Copy)]
enum Phase {
    Train = 0,
    Test = 1,
    Calibration = 2,
    Agents = 3,
}

fn phase_seeds(seed: u64, phase: Phase, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(16 + phase as u64);
    (0..n).map(|_| rng.random()).collect()
}

/// One line of `training.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingRow {
    pub episode: usize,
    pub mean_reward: f64,
    pub mean_sys_tput_mbps: f64,
    pub epsilon: f64,
}

impl TrainingRow {
    pub const HEADER: &'static str = "episode,mean_reward,mean_sys_tput_mbps,epsilon";

    pub fn to_csv(&self) -> String {
        format!("{},{:.6},{:.6},{:.6}", self.episode, self.mean_reward, self.mean_sys_tput_mbps, self.epsilon)
    }
}

enum Policy<'a> {
    Fixed(f64, f64),
    Joint(&'a mut dyn Agent),
    Pair(&'a mut FederatedPair),
}

/// Result of running a frozen policy over the test seeds.
#[derive(Debug, Clone, Default)]
struct TestOutcome {
    counters: Vec<TtiCounters>,
    rows: Vec<TimeseriesRow>,
    records: Vec<UptRecord>,
}

impl TestOutcome {
    fn summary(&self, file_bits: f64, interval_s: f64) -> Summary {
        let t = interval_throughput(&self.counters, file_bits, interval_s);
        let of = |n: Network| upt(self.records.iter().filter(|r| r.network == n));
        Summary {
            wifi_tput_mbps: t.wifi_mbps,
            nru_tput_mbps: t.nru_mbps,
            wifi_upt_mbps: of(Network::Wifi),
            nru_upt_mbps: of(Network::Nru),
        }
    }
}

fn test_phase(env: &mut CoexEnv, mut policy: Policy<'_>, seeds: &[u64], len: usize) -> Result<TestOutcome> {
    let interval_s = env.interval_s();
    let file_bits = env.sim().config().file_bits;
    let mut out = TestOutcome::default();
    for &seed in seeds {
        env.reset_episode(seed)?;
        let mut window = SlidingWindow::covering(1.0, interval_s);
        for _ in 0..len {
            let (w, n) = match &mut policy {
                Policy::Fixed(w, n) => (*w, *n),
                Policy::Joint(agent) => {
                    let a = agent.act(&env.central_obs(), true)?;
                    env.space().pair(a)
                }
                Policy::Pair(pair) => {
                    let aw = pair.wifi.act(&env.local_obs(Network::Wifi), true)?;
                    let an = pair.nru.act(&env.local_obs(Network::Nru), true)?;
                    (env.space().threshold(aw), env.space().threshold(an))
                }
            };
            let c = env.apply_dbm(w, n)?;
            window.push(c);
            let t = window.throughput(file_bits, interval_s);
            out.rows.push(TimeseriesRow {
                time_s: (out.counters.len() + 1) as f64 * interval_s,
                wifi_tput_mbps: t.wifi_mbps,
                nru_tput_mbps: t.nru_mbps,
                ed_wifi_dbm: w,
                ed_nru_dbm: n,
                drops_wifi: c.drops_wifi,
                drops_nru: c.drops_nru,
            });
            out.counters.push(c);
        }
        out.records.extend(env.sim().upt_records());
    }
    Ok(out)
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub mode: Mode,
    /// Fixed-threshold baseline over the test seeds.
    pub baseline: Summary,
    /// Frozen learned policy over the same test seeds.
    pub learned: Option<Summary>,
    pub training: Vec<TrainingRow>,
    pub rounds: Vec<RoundLog>,
    /// Fairness floor per decision interval, if fairness was on.
    pub t_wifi_mbit: Option<f64>,
    pub timeseries: Vec<TimeseriesRow>,
    pub topology_csv: String,
}

impl RunReport {
    /// The summary of the run's own mode.
    pub fn result(&self) -> &Summary {
        self.learned.as_ref().unwrap_or(&self.baseline)
    }

    pub fn summary_csv(&self) -> String {
        let mut s = format!("{SUMMARY_HEADER}\n");
        s.push_str(&summary_row(Mode::BaselineFixed, &self.baseline));
        if let Some(l) = &self.learned {
            s.push_str(&summary_row(self.mode, l));
        }
        s
    }

    pub fn training_csv(&self) -> String {
        let mut s = format!("{}\n", TrainingRow::HEADER);
        for r in &self.training {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }

    pub fn rounds_csv(&self) -> String {
        let mut s = format!("{}\n", RoundLog::HEADER);
        for r in &self.rounds {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }

    pub fn timeseries_csv(&self) -> String {
        let mut s = format!("{}\n", TimeseriesRow::HEADER);
        for r in &self.timeseries {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }

    /// Writes `training.csv`, `test_timeseries.csv`, `summary.csv`,
    /// `topology.csv`, `config.txt` and, in federated mode, `rounds.csv`.
    pub fn write(&self, config: &RunConfig, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("training.csv"), self.training_csv())?;
        fs::write(dir.join("test_timeseries.csv"), self.timeseries_csv())?;
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        fs::write(dir.join("topology.csv"), &self.topology_csv)?;
        fs::write(dir.join("config.txt"), config.to_text())?;
        if self.mode == Mode::FederatedDdqn {
            fs::write(dir.join("rounds.csv"), self.rounds_csv())?;
        }
        Ok(())
    }
}

pub const SUMMARY_HEADER: &str = "mode,wifi_tput_mbps,nru_tput_mbps,sys_tput_mbps,wifi_upt_mbps,nru_upt_mbps";

/// A missing UPT (no file arrived) is written as 0.
fn summary_row(mode: Mode, s: &Summary) -> String {
    format!(
        "{mode},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
        s.wifi_tput_mbps,
        s.nru_tput_mbps,
        s.system_tput_mbps(),
        s.wifi_upt_mbps.unwrap_or(0.0),
        s.nru_upt_mbps.unwrap_or(0.0)
    )
}

/// Parses a `summary.csv` into (mode label, summary) rows.
pub fn parse_summary(text: &str) -> Result<Vec<(String, Summary)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(SUMMARY_HEADER) {
        return Err(Error::Csv("summary header mismatch".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.trim().split(',').collect();
            if f.len() != 6 {
                return Err(Error::Csv(format!("expected 6 fields, got {}", f.len())));
            }
            let x = |i: usize| -> Result<f64> { f[i].parse().map_err(|_| Error::Csv(format!("bad number '{}'", f[i]))) };
            Ok((
                f[0].to_string(),
                Summary {
                    wifi_tput_mbps: x(1)?,
                    nru_tput_mbps: x(2)?,
                    wifi_upt_mbps: Some(x(4)?),
                    nru_upt_mbps: Some(x(5)?),
                },
            ))
        })
        .collect()
}

/// Runs the configured experiment in memory.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let space = config.action_space()?;
    let sim = Simulator::new(config.sim_config(), config.seed)?;
    let topology_csv = sim.topology().to_csv();
    let mut env = CoexEnv::new(sim, space.clone(), config.window, RewardMode::Throughput)?;
    let file_bits = env.sim().config().file_bits;
    let interval_s = env.interval_s();
    let len = config.episode_intervals;
    let test_seeds = phase_seeds(config.seed, Phase::Test, config.test_episodes);
    let train_seeds = phase_seeds(config.seed, Phase::Train, config.episodes);
    let agent_seeds = phase_seeds(config.seed, Phase::Agents, 2);
    let fixed = Policy::Fixed(config.baseline_ed_wifi_dbm, config.baseline_ed_nru_dbm);

    let base_out = test_phase(&mut env, fixed, &test_seeds, len)?;
    let baseline = base_out.summary(file_bits, interval_s);

    let t_wifi_mbit = if config.fairness {
        let mbps = match config.t_wifi_mbps {
            Some(t) => t,
            None => {
                let seeds = phase_seeds(config.seed, Phase::Calibration, config.calibration_episodes);
                let fixed = Policy::Fixed(config.baseline_ed_wifi_dbm, config.baseline_ed_nru_dbm);
                let cal = test_phase(&mut env, fixed, &seeds, len)?;
                cal.summary(file_bits, interval_s).wifi_tput_mbps * config.fairness_scale
            }
        };
        let t = mbps * interval_s;
        env.reward_mode = RewardMode::Fair { t_wifi_mbit: t };
        Some(t)
    } else {
        None
    };

    let mut training = Vec::new();
    let mut rounds = Vec::new();
    let mut push_row = |episode: usize, log: &crate::rl::EpisodeLog, epsilon: f64| {
        training.push(TrainingRow {
            episode,
            mean_reward: log.mean_reward(),
            mean_sys_tput_mbps: log.mean_sys_tput_mbps(file_bits, interval_s),
            epsilon,
        });
    };

    let learned_out = match config.mode {
        Mode::BaselineFixed => None,
        Mode::Tabular => {
            let total = (config.episodes * len) as u64;
            let schedule = EpsilonSchedule::over(config.eps_start, config.eps_end, total, config.eps_fraction);
            let mut agent = TabularAgent::new(space.joint_len(), config.tabular_bins, 4, config.tabular_eta, config.gamma, schedule, agent_seeds[0])?;
            for (e, &seed) in train_seeds.iter().enumerate() {
                let log = train_episode(&mut env, &mut agent, seed, len)?;
                push_row(e, &log, agent.schedule.value(agent.steps));
            }
            Some(test_phase(&mut env, Policy::Joint(&mut agent), &test_seeds, len)?)
        }
        Mode::CentralizedDdqn => {
            let arch = config.arch(4, space.joint_len());
            let mut agent = DdqnAgent::new(config.ddqn_config(arch, agent_seeds[0]))?;
            for (e, &seed) in train_seeds.iter().enumerate() {
                let log = train_episode(&mut env, &mut agent, seed, len)?;
                push_row(e, &log, agent.epsilon());
            }
            Some(test_phase(&mut env, Policy::Joint(&mut agent), &test_seeds, len)?)
        }
        Mode::FederatedDdqn => {
            let arch = config.arch(2, space.len());
            let wifi = DdqnAgent::new(config.ddqn_config(arch.clone(), agent_seeds[0]))?;
            let nru = DdqnAgent::new(config.ddqn_config(arch, agent_seeds[1]))?;
            let mut pair = FederatedPair::new(wifi, nru, config.fed_reward)?;
            for (e, &seed) in train_seeds.iter().enumerate() {
                let (log, logs) = pair.run_round(&mut env, seed, len)?;
                push_row(e, &log, pair.nru.epsilon());
                rounds.extend(logs);
            }
            Some(test_phase(&mut env, Policy::Pair(&mut pair), &test_seeds, len)?)
        }
    };

    let learned = learned_out.as_ref().map(|o| o.summary(file_bits, interval_s));
    let timeseries = learned_out.map_or(base_out.rows, |o| o.rows);
    Ok(RunReport {
        mode: config.mode,
        baseline,
        learned,
        training,
        rounds,
        t_wifi_mbit,
        timeseries,
        topology_csv,
    })
}

/// Runs the experiment and writes its artifacts into `dir`.
pub fn run_to_dir(config: &RunConfig, dir: &Path) -> Result<RunReport> {
    fs::create_dir_all(dir)?;
    let report = run(config)?;
    report.write(config, dir)?;
    Ok(report)
}

/// Relative change in percent; `None` when the baseline is zero.
pub fn pct_gain(baseline: f64, learned: f64) -> Option<f64> {
    (baseline != 0.0).then(|| (learned - baseline) / baseline * 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    pub metric: &'static str,
    pub baseline: f64,
    pub learned: f64,
    pub pct: Option<f64>,
}

impl fmt::Display for Gain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:.3} -> {:.3} ", self.metric, self.baseline, self.learned)?;
        match self.pct {
            Some(p) => write!(f, "({p:+.0}%)"),
            None => f.write_str("(n/a)"),
        }
    }
}

/// Percentage gains of every summary metric.
pub fn compare(baseline: &Summary, learned: &Summary) -> Vec<Gain> {
    let g = |metric, b: f64, l: f64| Gain {
        metric,
        baseline: b,
        learned: l,
        pct: pct_gain(b, l),
    };
    vec![
        g("wifi_tput_mbps", baseline.wifi_tput_mbps, learned.wifi_tput_mbps),
        g("nru_tput_mbps", baseline.nru_tput_mbps, learned.nru_tput_mbps),
        g("sys_tput_mbps", baseline.system_tput_mbps(), learned.system_tput_mbps()),
        g("wifi_upt_mbps", baseline.wifi_upt_mbps.unwrap_or(0.0), learned.wifi_upt_mbps.unwrap_or(0.0)),
        g("nru_upt_mbps", baseline.nru_upt_mbps.unwrap_or(0.0), learned.nru_upt_mbps.unwrap_or(0.0)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(w: f64, n: f64) -> Summary {
        Summary {
            wifi_tput_mbps: w,
            nru_tput_mbps: n,
            wifi_upt_mbps: Some(w / 2.0),
            nru_upt_mbps: Some(n / 2.0),
        }
    }

    #[test]
    fn percentage_gains() {
        assert_eq!(format!("{:.0}", pct_gain(25.5, 64.0).unwrap()), "151");
        assert_eq!(pct_gain(10.0, 10.0), Some(0.0));
        assert!(pct_gain(10.0, 8.0).unwrap() < 0.0);
        assert_eq!(pct_gain(0.0, 1.0), None);
        let gains = compare(&summary(10.0, 15.5), &summary(20.0, 44.0));
        assert_eq!(gains[2].to_string(), "sys_tput_mbps: 25.500 -> 64.000 (+151%)");
    }

    #[test]
    fn config_text_round_trip_and_errors() {
        let mut cfg = RunConfig::preset(Preset::Full);
        cfg.set("mode", "federated-ddqn").unwrap();
        cfg.set("t_wifi_mbps", "3.5").unwrap();
        cfg.set("ue-lbt", "cat4").unwrap();
        assert_eq!(RunConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        assert!(cfg.set("nonsense", "1").is_err());
        assert!(cfg.set("mode", "other").is_err());
        assert!(cfg.set("seed", "-1").is_err());
        assert!(RunConfig::from_text("mode centralized-ddqn").is_err());
        let parsed = RunConfig::from_text("# comment\n\npreset = desk\nmode = tabular # trailing\n").unwrap();
        assert_eq!(parsed.mode, Mode::Tabular);
    }

    #[test]
    fn learning_modes_need_episodes() {
        let mut cfg = RunConfig::default();
        cfg.mode = Mode::CentralizedDdqn;
        cfg.episodes = 0;
        assert!(matches!(run(&cfg), Err(Error::Config(_))));
        cfg.mode = Mode::BaselineFixed;
        assert!(cfg.validate().is_ok());
        cfg.grid_step_db = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn summary_csv_round_trip() {
        let report = RunReport {
            mode: Mode::CentralizedDdqn,
            baseline: summary(10.0, 2.0),
            learned: Some(summary(8.0, 9.0)),
            training: vec![],
            rounds: vec![],
            t_wifi_mbit: None,
            timeseries: vec![],
            topology_csv: String::new(),
        };
        let rows = parse_summary(&report.summary_csv()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].0, "baseline-fixed");
        assert_eq!(rows[1].1, summary(8.0, 9.0));
        assert!(parse_summary("bad header\n").is_err());
    }

    #[test]
    fn short_learning_runs_produce_consistent_reports() {
        for mode in [Mode::Tabular, Mode::CentralizedDdqn, Mode::FederatedDdqn] {
            let mut cfg = RunConfig::default();
            cfg.mode = mode;
            cfg.episodes = 2;
            cfg.episode_intervals = 20;
            cfg.test_episodes = 1;
            cfg.batch = 8;
            cfg.hidden = 4;
            let r = run(&cfg).unwrap();
            assert_eq!(r.training.len(), 2);
            assert_eq!(r.timeseries.len(), 20);
            assert!(r.learned.is_some());
            assert_eq!(r.rounds.len(), if mode == Mode::FederatedDdqn { 4 } else { 0 });
            assert!(r.timeseries_csv().lines().all(|l| !l.contains("NaN")));
        }
    }

    #[test]
    fn fairness_floor_is_measured_from_the_baseline() {
        let mut cfg = RunConfig::default();
        cfg.mode = Mode::CentralizedDdqn;
        cfg.fairness = true;
        cfg.episodes = 1;
        cfg.episode_intervals = 30;
        cfg.test_episodes = 1;
        cfg.calibration_episodes = 1;
        cfg.hidden = 4;
        let r = run(&cfg).unwrap();
        let t = r.t_wifi_mbit.unwrap();
        assert!(t >= 0.0);
        cfg.t_wifi_mbps = Some(5.0);
        assert!((run(&cfg).unwrap().t_wifi_mbit.unwrap() - 0.5).abs() < 1e-12);
    }
}
