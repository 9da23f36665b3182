//! Tabular Q-learning over coarsely binned observations.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::env::Agent;
use super::{argmax, EpsilonSchedule, Transition};
use crate::{Error, Result};

/// Dense state × action value table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub states: usize,
    pub actions: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn zeros(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            values: vec![0.0; states * actions],
        }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One constant-step Q-learning update of entry (s, a).
pub fn q_table_update(q: &mut QTable, s: usize, a: usize, r: f64, s_next: usize, eta: f64, gamma: f64) {
    let target = r + gamma * q.max(s_next);
    let idx = s * q.actions + a;
    q.values[idx] += eta * (target - q.values[idx]);
}

/// ε-greedy tabular learner. The state is the most recent
/// (WiFi, NR-U) count pair of the observation, each normalized value
/// binned into `bins` levels.
#[derive(Debug, Clone)]
pub struct TabularAgent {
    pub table: QTable,
    pub eta: f64,
    pub gamma: f64,
    pub bins: usize,
    /// Feature stride of one window step and offsets of the two counts.
    pub stride: usize,
    pub schedule: EpsilonSchedule,
    pub steps: u64,
    rng: ChaCha8Rng,
}

impl TabularAgent {
    pub fn new(actions: usize, bins: usize, stride: usize, eta: f64, gamma: f64, schedule: EpsilonSchedule, seed: u64) -> Result<Self> {
        if bins == 0 || stride < 2 || actions == 0 {
            return Err(Error::Config("tabular agent needs bins ≥ 1, stride ≥ 2 and actions ≥ 1".into()));
        }
        if !(eta > 0.0 && eta <= 1.0) || !(0.0..1.0).contains(&gamma) {
            return Err(Error::Config(format!("tabular step size {eta} or discount {gamma} out of range")));
        }
        Ok(Self {
            table: QTable::zeros(bins * bins, actions),
            eta,
            gamma,
            bins,
            stride,
            schedule,
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn state_of(&self, obs: &[f64]) -> usize {
        let last = &obs[obs.len() - self.stride..];
        let bin = |x: f64| ((x.clamp(0.0, 1.0) * (self.bins - 1) as f64).round() as usize).min(self.bins - 1);
        bin(last[0]) * self.bins + bin(last[1])
    }
}

impl Agent for TabularAgent {
    fn act(&mut self, obs: &[f64], greedy: bool) -> Result<usize> {
        let eps = if greedy { 0.0 } else { self.schedule.value(self.steps) };
        if eps > 0.0 && self.rng.random::<f64>() < eps {
            return Ok(self.rng.random_range(0..self.table.actions));
        }
        Ok(argmax(self.table.row(self.state_of(obs))))
    }

    fn observe(&mut self, t: Transition) -> Result<()> {
        let (s, s2) = (self.state_of(&t.state), self.state_of(&t.next_state));
        q_table_update(&mut self.table, s, t.action, t.reward, s2, self.eta, self.gamma);
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_update_by_substitution() {
        let mut q = QTable::zeros(2, 2);
        q_table_update(&mut q, 0, 1, 1.0, 1, 0.01, 0.9);
        assert!((q.get(0, 1) - 0.01).abs() < 1e-15);
        assert_eq!(q.get(0, 0), 0.0);
        let mut z = QTable::zeros(2, 2);
        q_table_update(&mut z, 1, 0, 0.0, 0, 0.01, 0.9);
        assert_eq!(z, QTable::zeros(2, 2));
    }

    #[test]
    fn converges_to_value_iteration_fixed_point() {
        // Deterministic 2-state, 2-action MDP: next[s][a], reward[s][a].
        let next = [[0usize, 1], [0, 1]];
        let reward = [[1.0, 0.0], [2.0, -1.0]];
        let gamma = 0.9;
        let mut v = QTable::zeros(2, 2);
        for _ in 0..2000 {
            let mut nv = v.clone();
            for s in 0..2 {
                for a in 0..2 {
                    nv.values[s * 2 + a] = reward[s][a] + gamma * v.max(next[s][a]);
                }
            }
            v = nv;
        }
        let mut q = QTable::zeros(2, 2);
        for _ in 0..40_000 {
            for s in 0..2 {
                for a in 0..2 {
                    q_table_update(&mut q, s, a, reward[s][a], next[s][a], 0.1, gamma);
                }
            }
        }
        for (a, b) in q.values.iter().zip(&v.values) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn binning_uses_latest_counts() {
        let agent = TabularAgent::new(4, 4, 4, 0.01, 0.9, EpsilonSchedule::constant(0.0), 0).unwrap();
        let obs = [1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.5];
        assert_eq!(agent.state_of(&obs), 3);
        assert!(TabularAgent::new(4, 0, 4, 0.01, 0.9, EpsilonSchedule::constant(0.0), 0).is_err());
        assert!(TabularAgent::new(4, 4, 4, 0.0, 0.9, EpsilonSchedule::constant(0.0), 0).is_err());
    }
}
