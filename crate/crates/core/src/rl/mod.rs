//! Learning stack: action space, ε-greedy selection, rewards, the tabular
//! Q-learning baseline, double deep Q-learning with replay and a target
//! network, and the environment wrapper around the simulator.

pub mod agent;
pub mod checkpoint;
pub mod env;
pub mod net;
pub mod replay;
pub mod tabular;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::{Error, Result};

pub use agent::{td_gradient, DdqnAgent, DdqnConfig};
pub use checkpoint::Checkpoint;
pub use env::{evaluate_episode, train_episode, Agent, BanditEnv, CoexEnv, EnvStep, EpisodeLog, Environment, RewardMode, StepLog};
pub use net::{Arch, NetParams, RmsProp};
pub use replay::{ReplayMemory, Transition};
pub use tabular::{q_table_update, QTable, TabularAgent};

/// Lowest ED threshold of the default grid, dBm.
pub const GRID_MIN_DBM: f64 = -82.0;
/// Highest ED threshold of the default grid, dBm.
pub const GRID_MAX_DBM: f64 = -52.0;
pub const GRID_STEP_DB: f64 = 3.0;

/// Ordered grid of selectable ED thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    grid: Vec<f64>,
}

impl Default for ActionSpace {
    fn default() -> Self {
        Self::uniform(GRID_MIN_DBM, GRID_MAX_DBM, GRID_STEP_DB).expect("default grid is valid")
    }
}

impl ActionSpace {
    pub fn uniform(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(hi >= lo) {
            return Err(Error::Config(format!("invalid threshold grid {lo}..{hi} step {step}")));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        Self::from_grid((0..n).map(|i| lo + step * i as f64).collect())
    }

    pub fn from_grid(grid: Vec<f64>) -> Result<Self> {
        if grid.is_empty() || !grid.iter().all(|g| g.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("threshold grid must be non-empty, finite and increasing".into()));
        }
        Ok(Self { grid })
    }

    /// Per-network action count.
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Joint action count of the centralized agent.
    pub fn joint_len(&self) -> usize {
        self.grid.len() * self.grid.len()
    }

    pub fn threshold(&self, index: usize) -> f64 {
        self.grid[index]
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Splits a joint action into (WiFi index, NR-U index).
    pub fn split(&self, joint: usize) -> (usize, usize) {
        (joint / self.grid.len(), joint % self.grid.len())
    }

    pub fn join(&self, wifi: usize, nru: usize) -> usize {
        wifi * self.grid.len() + nru
    }

    /// (WiFi, NR-U) thresholds in dBm of a joint action.
    pub fn pair(&self, joint: usize) -> (f64, f64) {
        let (w, n) = self.split(joint);
        (self.grid[w], self.grid[n])
    }

    /// Index of the grid point nearest to `dbm`.
    pub fn nearest(&self, dbm: f64) -> usize {
        let mut best = 0;
        for (i, g) in self.grid.iter().enumerate() {
            if (g - dbm).abs() < (self.grid[best] - dbm).abs() {
                best = i;
            }
        }
        best
    }

    /// Position of a threshold within the grid's span, clamped to [0, 1].
    pub fn position(&self, dbm: f64) -> f64 {
        let (lo, hi) = (self.grid[0], self.grid[self.grid.len() - 1]);
        if hi == lo {
            0.0
        } else {
            ((dbm - lo) / (hi - lo)).clamp(0.0, 1.0)
        }
    }

    /// Position of a per-network index scaled to [0, 1].
    pub fn normalized(&self, index: usize) -> f64 {
        if self.grid.len() == 1 {
            0.0
        } else {
            index as f64 / (self.grid.len() - 1) as f64
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy choice: uniform with probability ε, otherwise the greedy action
/// of `net` at `obs`. The network is evaluated only when exploiting.
pub fn select_action<R: Rng + ?Sized>(net: &NetParams, obs: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    let n = net.arch.output_len();
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..n));
    }
    Ok(argmax(&net.forward(obs)?))
}

/// Delivered data of an interval in Mbit.
pub fn reward_throughput(n_wifi: u64, n_nru: u64, file_mbit: f64) -> f64 {
    (n_wifi + n_nru) as f64 * file_mbit
}

/// Throughput reward gated on the WiFi cell delivering at least
/// `t_wifi_mbit` during the interval.
pub fn reward_fair(n_wifi: u64, n_nru: u64, file_mbit: f64, t_wifi_mbit: f64) -> f64 {
    if n_wifi as f64 * file_mbit >= t_wifi_mbit {
        reward_throughput(n_wifi, n_nru, file_mbit)
    } else {
        0.0
    }
}

/// Copies the online parameters into the target when `step` is a multiple
/// of `k`. Returns whether a copy happened.
pub fn sync_target(online: &NetParams, target: &mut NetParams, step: u64, k: u64) -> bool {
    if k > 0 && step % k == 0 {
        target.theta.copy_from_slice(&online.theta);
        true
    } else {
        false
    }
}

/// Linear ε annealing from `start` to `end` over `decay_steps`, then flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        Self {
            start: eps,
            end: eps,
            decay_steps: 0,
        }
    }

    /// Anneals over `fraction` of `total_steps`.
    pub fn over(start: f64, end: f64, total_steps: u64, fraction: f64) -> Self {
        Self {
            start,
            end,
            decay_steps: (total_steps as f64 * fraction).round() as u64,
        }
    }

    pub fn value(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / self.decay_steps as f64
    }
}

/// How the bootstrap action of the TD target is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetMode {
    /// Argmax through the online network, value from the target network.
    #[default]
    Double,
    /// Max over the target network alone.
    PaperLiteral,
}

impl fmt::Display for TargetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetMode::Double => "double",
            TargetMode::PaperLiteral => "paper-literal",
        })
    }
}

impl FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double" => Ok(TargetMode::Double),
            "paper-literal" | "vanilla" => Ok(TargetMode::PaperLiteral),
            other => Err(Error::Config(format!("unknown target mode '{other}'"))),
        }
    }
}
