//! Environment interface, the simulator-backed coexistence environment and
//! the episode driver shared by every learner.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{reward_fair, reward_throughput, ActionSpace, Transition};
use crate::metrics::TtiCounters;
use crate::scenario::Network;
use crate::simcore::Simulator;
use crate::{Error, Result};

/// RNG stream of the episode seed that picks the warm-up action.
const WARMUP_STREAM: u64 = 5;

/// Outcome of one decision step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub counters: TtiCounters,
}

pub trait Environment {
    fn obs_len(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Starts an episode and returns the first observation.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: usize) -> Result<EnvStep>;
}

pub trait Agent {
    /// ε-greedy action, or the purely greedy one when `greedy` is set.
    fn act(&mut self, obs: &[f64], greedy: bool) -> Result<usize>;
    /// Records a transition and performs whatever learning it triggers.
    fn observe(&mut self, t: Transition) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub action: usize,
    pub reward: f64,
    pub n_wifi: u64,
    pub n_nru: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeLog {
    pub steps: Vec<StepLog>,
}

impl EpisodeLog {
    pub fn mean_reward(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.reward).sum::<f64>() / self.steps.len() as f64
    }

    pub fn files(&self, network: Network) -> u64 {
        self.steps
            .iter()
            .map(|s| match network {
                Network::Wifi => s.n_wifi,
                Network::Nru => s.n_nru,
            })
            .sum()
    }

    /// Mean system throughput over the episode.
    pub fn mean_sys_tput_mbps(&self, file_bits: f64, interval_s: f64) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        let files = self.files(Network::Wifi) + self.files(Network::Nru);
        files as f64 * file_bits / 1e6 / (self.steps.len() as f64 * interval_s)
    }
}

/// Runs `len` decision steps, storing every transition in the agent.
pub fn train_episode<E: Environment + ?Sized, A: Agent + ?Sized>(env: &mut E, agent: &mut A, seed: u64, len: usize) -> Result<EpisodeLog> {
    run_episode(env, agent, seed, len, true)
}

/// Runs `len` greedy decision steps without learning.
pub fn evaluate_episode<E: Environment + ?Sized, A: Agent + ?Sized>(env: &mut E, agent: &mut A, seed: u64, len: usize) -> Result<EpisodeLog> {
    run_episode(env, agent, seed, len, false)
}

fn run_episode<E: Environment + ?Sized, A: Agent + ?Sized>(env: &mut E, agent: &mut A, seed: u64, len: usize, learn: bool) -> Result<EpisodeLog> {
    let mut obs = env.reset(seed)?;
    let mut log = EpisodeLog {
        steps: Vec::with_capacity(len),
    };
    for _ in 0..len {
        let action = agent.act(&obs, !learn)?;
        let step = env.step(action)?;
        if !step.reward.is_finite() {
            return Err(Error::NonFinite("reward".into()));
        }
        log.steps.push(StepLog {
            action,
            reward: step.reward,
            n_wifi: step.counters.n_wifi,
            n_nru: step.counters.n_nru,
        });
        if learn {
            agent.observe(Transition {
                state: std::mem::take(&mut obs),
                action,
                reward: step.reward,
                next_state: step.obs.clone(),
            })?;
        }
        obs = step.obs;
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardMode {
    Throughput,
    /// Zero reward unless the WiFi cell delivers at least this many Mbit in
    /// the interval.
    Fair { t_wifi_mbit: f64 },
}

/// One window entry: normalized WiFi and NR-U counts and the normalized
/// thresholds that produced them.
type Entry = [f64; 4];

/// The coexistence simulator as a decision process: one action per
/// interval sets both ED thresholds; observations are a window of the most
/// recent intervals' normalized success counts and applied thresholds.
#[derive(Debug)]
pub struct CoexEnv {
    sim: Simulator,
    space: ActionSpace,
    window: usize,
    pub reward_mode: RewardMode,
    history: VecDeque<Entry>,
    /// Running maxima of the counts, kept across episodes.
    max_wifi: f64,
    max_nru: f64,
}

impl CoexEnv {
    pub fn new(sim: Simulator, space: ActionSpace, window: usize, reward_mode: RewardMode) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("observation window must be positive".into()));
        }
        Ok(Self {
            sim,
            space,
            window,
            reward_mode,
            history: VecDeque::with_capacity(window),
            max_wifi: 1.0,
            max_nru: 1.0,
        })
    }

    pub fn sim(&self) -> &Simulator {
        &self.sim
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn file_mbit(&self) -> f64 {
        self.sim.config().file_bits / 1e6
    }

    pub fn interval_s(&self) -> f64 {
        self.sim.config().interval_us as f64 / 1e6
    }

    /// Resets the simulator and plays one warm-up interval under a random
    /// threshold pair so the first observation carries real counts.
    pub fn reset_episode(&mut self, seed: u64) -> Result<()> {
        self.sim.reset(seed)?;
        self.history.clear();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(WARMUP_STREAM);
        let n = self.space.len();
        let (w, nr) = (rng.random_range(0..n), rng.random_range(0..n));
        self.apply(w, nr)?;
        Ok(())
    }

    /// Runs one interval with per-network threshold indices.
    pub fn apply(&mut self, wifi: usize, nru: usize) -> Result<TtiCounters> {
        let n = self.space.len();
        if wifi >= n || nru >= n {
            return Err(Error::Domain(format!("threshold index ({wifi}, {nru}) outside grid of {n}")));
        }
        self.apply_dbm(self.space.threshold(wifi), self.space.threshold(nru))
    }

    /// Runs one interval with explicit thresholds, which need not lie on
    /// the grid; the observation records their position within the grid's
    /// span, clamped to [0, 1].
    pub fn apply_dbm(&mut self, ed_wifi_dbm: f64, ed_nru_dbm: f64) -> Result<TtiCounters> {
        if !ed_wifi_dbm.is_finite() || !ed_nru_dbm.is_finite() {
            return Err(Error::NonFinite("ED threshold".into()));
        }
        let c = self.sim.step_interval(ed_wifi_dbm, ed_nru_dbm);
        self.max_wifi = self.max_wifi.max(c.n_wifi as f64);
        self.max_nru = self.max_nru.max(c.n_nru as f64);
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back([
            c.n_wifi as f64 / self.max_wifi,
            c.n_nru as f64 / self.max_nru,
            self.space.position(ed_wifi_dbm),
            self.space.position(ed_nru_dbm),
        ]);
        Ok(c)
    }

    pub fn reward(&self, c: &TtiCounters) -> f64 {
        let f = self.file_mbit();
        match self.reward_mode {
            RewardMode::Throughput => reward_throughput(c.n_wifi, c.n_nru, f),
            RewardMode::Fair { t_wifi_mbit } => reward_fair(c.n_wifi, c.n_nru, f, t_wifi_mbit),
        }
    }

    fn windowed(&self, pick: impl Fn(&Entry) -> Vec<f64>, width: usize) -> Vec<f64> {
        let mut out = vec![0.0; (self.window - self.history.len()) * width];
        for e in &self.history {
            out.extend(pick(e));
        }
        out
    }

    /// Joint observation: per interval [N_w, N_n, λ_w, λ_n], normalized,
    /// oldest first, zero-padded at the front.
    pub fn central_obs(&self) -> Vec<f64> {
        self.windowed(|e| e.to_vec(), 4)
    }

    /// One network's own view: per interval [N_own, λ_own].
    pub fn local_obs(&self, network: Network) -> Vec<f64> {
        match network {
            Network::Wifi => self.windowed(|e| vec![e[0], e[2]], 2),
            Network::Nru => self.windowed(|e| vec![e[1], e[3]], 2),
        }
    }
}

impl Environment for CoexEnv {
    fn obs_len(&self) -> usize {
        4 * self.window
    }

    fn num_actions(&self) -> usize {
        self.space.joint_len()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.reset_episode(seed)?;
        Ok(self.central_obs())
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        if action >= self.space.joint_len() {
            return Err(Error::Domain(format!("joint action {action} out of range")));
        }
        let (w, n) = self.space.split(action);
        let counters = self.apply(w, n)?;
        Ok(EnvStep {
            reward: self.reward(&counters),
            obs: self.central_obs(),
            counters,
        })
    }
}

/// Stateless bandit: one arm pays 1, every other arm pays 0.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    pub arms: usize,
    pub best: usize,
}

impl Environment for BanditEnv {
    fn obs_len(&self) -> usize {
        1
    }

    fn num_actions(&self) -> usize {
        self.arms
    }

    fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
        Ok(vec![1.0])
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        Ok(EnvStep {
            obs: vec![1.0],
            reward: if action == self.best { 1.0 } else { 0.0 },
            counters: TtiCounters::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::{Arch, DdqnAgent, DdqnConfig, EpsilonSchedule};
    use crate::simcore::SimConfig;

    fn desk_env() -> CoexEnv {
        let sim = Simulator::new(SimConfig::desk(), 1).unwrap();
        CoexEnv::new(sim, ActionSpace::default(), 8, RewardMode::Throughput).unwrap()
    }

    #[test]
    fn observation_shape_padding_and_range() {
        let mut env = desk_env();
        let obs = env.reset(4).unwrap();
        assert_eq!(obs.len(), 32);
        assert!(obs[..28].iter().all(|&x| x == 0.0));
        for a in [0, 60, 120, 5, 77, 33, 99, 11, 42, 7] {
            let s = env.step(a).unwrap();
            assert_eq!(s.obs.len(), 32);
            assert!(s.obs.iter().all(|x| (0.0..=1.0).contains(x)));
            assert_eq!(s.reward, reward_throughput(s.counters.n_wifi, s.counters.n_nru, 4.0));
        }
        assert_eq!(env.local_obs(Network::Wifi).len(), 16);
        assert!(env.step(121).is_err());
    }

    #[test]
    fn episode_appends_one_transition_per_step_and_explores_uniformly() {
        let mut env = desk_env();
        let mut cfg = DdqnConfig::new(
            Arch::Gru {
                input: 4,
                steps: 8,
                hidden: 4,
                output: 121,
            },
            40,
            3,
        );
        cfg.schedule = EpsilonSchedule::constant(1.0);
        cfg.batch = 8;
        let mut agent = DdqnAgent::new(cfg).unwrap();
        let start = agent.online.clone();
        let log = train_episode(&mut env, &mut agent, 9, 40).unwrap();
        assert_eq!(log.steps.len(), 40);
        assert_eq!(agent.replay.len(), 40);
        assert_ne!(agent.online, start);
    }

    #[test]
    fn equal_seeds_reproduce_action_sequences() {
        let run = || {
            let mut env = desk_env();
            let mut cfg = DdqnConfig::new(Arch::mlp(vec![32, 8, 121]), 60, 5);
            cfg.batch = 8;
            let mut agent = DdqnAgent::new(cfg).unwrap();
            let a = train_episode(&mut env, &mut agent, 1, 30).unwrap();
            let b = train_episode(&mut env, &mut agent, 2, 30).unwrap();
            (a, b)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bandit_arm_is_found() {
        let mut env = BanditEnv { arms: 11, best: 6 };
        let mut cfg = DdqnConfig::new(Arch::mlp(vec![1, 16, 11]), 5000, 12);
        cfg.lr = 1e-3;
        cfg.schedule = EpsilonSchedule::over(1.0, 0.05, 2500, 1.0);
        let mut agent = DdqnAgent::new(cfg).unwrap();
        for ep in 0..50 {
            train_episode(&mut env, &mut agent, ep, 100).unwrap();
        }
        let log = evaluate_episode(&mut env, &mut agent, 0, 200).unwrap();
        let hits = log.steps.iter().filter(|s| s.action == 6).count();
        assert!(hits as f64 / 200.0 >= 0.95);
    }
}
