//! Two-agent federated learning: each network trains its own Q-network on
//! local observations, and a central server averages the parameters once
//! per round and pushes the result back to both agents.

use std::fmt;
use std::str::FromStr;

use crate::metrics::TtiCounters;
use crate::rl::env::{Agent, CoexEnv, EpisodeLog, StepLog};
use crate::rl::{reward_throughput, DdqnAgent, Transition};
use crate::scenario::Network;
use crate::{Error, Result};

/// Elementwise mean of two parameter vectors.
pub fn fedavg(theta_n: &[f64], theta_w: &[f64]) -> Result<Vec<f64>> {
    if theta_n.len() != theta_w.len() {
        return Err(Error::ShapeMismatch {
            expected: theta_n.len(),
            actual: theta_w.len(),
        });
    }
    let out: Vec<f64> = theta_n.iter().zip(theta_w).map(|(a, b)| 0.5 * (a + b)).collect();
    if !out.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("aggregated parameters".into()));
    }
    Ok(out)
}

/// Which scalar each agent learns from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FedReward {
    /// Both agents receive the environment's system reward.
    #[default]
    Shared,
    /// Each agent receives only its own network's delivered data.
    Local,
}

impl fmt::Display for FedReward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FedReward::Shared => "shared",
            FedReward::Local => "local",
        })
    }
}

impl FromStr for FedReward {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(FedReward::Shared),
            "local" => Ok(FedReward::Local),
            other => Err(Error::Config(format!("unknown federated reward '{other}'"))),
        }
    }
}

/// Per-step outcome of a two-agent environment. Index 0 is the WiFi
/// agent, index 1 the NR-U agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStep {
    pub obs: [Vec<f64>; 2],
    pub shared_reward: f64,
    pub local_rewards: [f64; 2],
    pub counters: TtiCounters,
}

/// An environment driven by one WiFi and one NR-U agent, each seeing only
/// its own observation.
pub trait PairEnvironment {
    fn reset(&mut self, seed: u64) -> Result<[Vec<f64>; 2]>;
    fn step(&mut self, wifi: usize, nru: usize) -> Result<PairStep>;
}

impl PairEnvironment for CoexEnv {
    fn reset(&mut self, seed: u64) -> Result<[Vec<f64>; 2]> {
        self.reset_episode(seed)?;
        Ok([self.local_obs(Network::Wifi), self.local_obs(Network::Nru)])
    }

    fn step(&mut self, wifi: usize, nru: usize) -> Result<PairStep> {
        let counters = self.apply(wifi, nru)?;
        let f = self.file_mbit();
        Ok(PairStep {
            obs: [self.local_obs(Network::Wifi), self.local_obs(Network::Nru)],
            shared_reward: self.reward(&counters),
            local_rewards: [reward_throughput(counters.n_wifi, 0, f), reward_throughput(0, counters.n_nru, f)],
            counters,
        })
    }
}

/// One line of the round log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundLog {
    pub round: u64,
    pub agent: Network,
    pub mean_reward: f64,
    /// L2 norm of how far local training moved the agent's parameters
    /// during the round.
    pub param_l2_delta: f64,
}

impl RoundLog {
    pub const HEADER: &'static str = "round,agent,mean_reward,param_l2_delta";

    pub fn to_csv(&self) -> String {
        let agent = match self.agent {
            Network::Wifi => "wifi",
            Network::Nru => "nru",
        };
        format!("{},{},{:.6},{:.6}", self.round, agent, self.mean_reward, self.param_l2_delta)
    }
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The WiFi and NR-U learners plus the aggregation state.
#[derive(Debug, Clone)]
pub struct FederatedPair {
    pub wifi: DdqnAgent,
    pub nru: DdqnAgent,
    pub reward: FedReward,
    pub rounds: u64,
}

impl FederatedPair {
    /// Both agents must have identical architectures. The first round
    /// starts from a common model: the NR-U agent's initial parameters are
    /// pushed to both.
    pub fn new(wifi: DdqnAgent, mut nru: DdqnAgent, reward: FedReward) -> Result<Self> {
        if wifi.online.arch != nru.online.arch {
            return Err(Error::Config("federated agents must share one architecture".into()));
        }
        let mut wifi = wifi;
        let theta = nru.online.theta.clone();
        wifi.set_params(&theta)?;
        nru.set_params(&theta)?;
        Ok(Self {
            wifi,
            nru,
            reward,
            rounds: 0,
        })
    }

    /// Runs one episode with both agents acting on their local views.
    /// With `learn` unset both act greedily and store nothing.
    pub fn run_episode<E: PairEnvironment + ?Sized>(&mut self, env: &mut E, seed: u64, len: usize, learn: bool) -> Result<(EpisodeLog, [f64; 2])> {
        let [mut obs_w, mut obs_n] = env.reset(seed)?;
        let mut log = EpisodeLog {
            steps: Vec::with_capacity(len),
        };
        let mut sums = [0.0; 2];
        for _ in 0..len {
            let a_w = self.wifi.act(&obs_w, !learn)?;
            let a_n = self.nru.act(&obs_n, !learn)?;
            let step = env.step(a_w, a_n)?;
            let rewards = match self.reward {
                FedReward::Shared => [step.shared_reward; 2],
                FedReward::Local => step.local_rewards,
            };
            if !rewards.iter().all(|r| r.is_finite()) {
                return Err(Error::NonFinite("reward".into()));
            }
            sums[0] += rewards[0];
            sums[1] += rewards[1];
            log.steps.push(StepLog {
                action: a_w * self.wifi.online.arch.output_len() + a_n,
                reward: step.shared_reward,
                n_wifi: step.counters.n_wifi,
                n_nru: step.counters.n_nru,
            });
            let [next_w, next_n] = step.obs;
            if learn {
                self.wifi.observe(Transition {
                    state: std::mem::take(&mut obs_w),
                    action: a_w,
                    reward: rewards[0],
                    next_state: next_w.clone(),
                })?;
                self.nru.observe(Transition {
                    state: std::mem::take(&mut obs_n),
                    action: a_n,
                    reward: rewards[1],
                    next_state: next_n.clone(),
                })?;
            }
            obs_w = next_w;
            obs_n = next_n;
        }
        let n = len.max(1) as f64;
        Ok((log, [sums[0] / n, sums[1] / n]))
    }

    /// Averages both agents' parameters and overwrites their online and
    /// target networks with the result. Optimizer state stays local.
    pub fn aggregate(&mut self) -> Result<Vec<f64>> {
        if !self.wifi.online.is_finite() || !self.nru.online.is_finite() {
            return Err(Error::NonFinite("local parameters before aggregation".into()));
        }
        let global = fedavg(&self.nru.online.theta, &self.wifi.online.theta)?;
        self.wifi.set_params(&global)?;
        self.nru.set_params(&global)?;
        Ok(global)
    }

    /// One federation round: a local training episode for both agents,
    /// parameter report, averaging and push.
    pub fn run_round<E: PairEnvironment + ?Sized>(&mut self, env: &mut E, seed: u64, len: usize) -> Result<(EpisodeLog, [RoundLog; 2])> {
        let start = self.nru.online.theta.clone();
        let (log, means) = self.run_episode(env, seed, len, true)?;
        let deltas = [
            l2_distance(&self.wifi.online.theta, &start),
            l2_distance(&self.nru.online.theta, &start),
        ];
        self.aggregate()?;
        let round = self.rounds;
        self.rounds += 1;
        let entry = |agent, i: usize| RoundLog {
            round,
            agent,
            mean_reward: means[i],
            param_l2_delta: deltas[i],
        };
        Ok((log, [entry(Network::Wifi, 0), entry(Network::Nru, 1)]))
    }
}

/// Two independent bandits, one per agent, with agent-specific
/// observations: the WiFi agent sees `[1, 0]`, the NR-U agent `[0, 1]`.
#[derive(Debug, Clone)]
pub struct PairBandit {
    pub arms: usize,
    pub best: [usize; 2],
}

impl PairBandit {
    fn obs() -> [Vec<f64>; 2] {
        [vec![1.0, 0.0], vec![0.0, 1.0]]
    }
}

impl PairEnvironment for PairBandit {
    fn reset(&mut self, _seed: u64) -> Result<[Vec<f64>; 2]> {
        Ok(Self::obs())
    }

    fn step(&mut self, wifi: usize, nru: usize) -> Result<PairStep> {
        let local = [f64::from(u8::from(wifi == self.best[0])), f64::from(u8::from(nru == self.best[1]))];
        Ok(PairStep {
            obs: Self::obs(),
            shared_reward: local[0] + local[1],
            local_rewards: local,
            counters: TtiCounters::default(),
        })
    }
}
