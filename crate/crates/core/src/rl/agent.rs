//! Deep Q-learning agent: online and target networks, replay memory,
//! ε-greedy exploration and RMSProp updates on the squared TD error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::env::Agent;
use super::net::{Cache, NetParams};
use super::replay::{ReplayMemory, Transition};
use super::{argmax, select_action, sync_target, Arch, EpsilonSchedule, RmsProp, TargetMode};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DdqnConfig {
    pub arch: Arch,
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    pub replay_capacity: usize,
    /// Decision steps between target-network copies.
    pub target_sync: u64,
    pub schedule: EpsilonSchedule,
    pub target_mode: TargetMode,
    pub seed: u64,
}

impl DdqnConfig {
    /// Defaults for an architecture; ε decays over half of `total_steps`.
    pub fn new(arch: Arch, total_steps: u64, seed: u64) -> Self {
        Self {
            arch,
            gamma: 0.9,
            lr: 1e-4,
            batch: 32,
            replay_capacity: 100_000,
            target_sync: 500,
            schedule: EpsilonSchedule::over(1.0, 0.05, total_steps, 0.5),
            target_mode: TargetMode::Double,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("discount {} must lie in [0, 1)", self.gamma)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch == 0 || self.replay_capacity < self.batch {
            return Err(Error::Config("minibatch must be positive and fit in the replay memory".into()));
        }
        if self.target_sync == 0 {
            return Err(Error::Config("target sync period must be positive".into()));
        }
        Ok(())
    }
}

/// Gradient of `(1/2B) Σ (y − Q(s, a; θ))²` with respect to θ, with
/// `y = r + γ Q(s', a*; θ̄)`. Returns the gradient and the loss.
pub fn td_gradient(batch: &[&Transition], online: &NetParams, target: &NetParams, gamma: f64, mode: TargetMode) -> Result<(Vec<f64>, f64)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if online.theta.len() != target.theta.len() {
        return Err(Error::ShapeMismatch {
            expected: online.theta.len(),
            actual: target.theta.len(),
        });
    }
    let b = batch.len() as f64;
    let mut grad = vec![0.0; online.len()];
    let mut cache = Cache::default();
    let mut loss = 0.0;
    let n_out = online.arch.output_len();
    let mut dq = vec![0.0; n_out];
    for t in batch {
        let q_next_target = target.forward(&t.next_state)?;
        let a_star = match mode {
            TargetMode::Double => argmax(&online.forward(&t.next_state)?),
            TargetMode::PaperLiteral => argmax(&q_next_target),
        };
        let y = t.reward + gamma * q_next_target[a_star];
        let q = online.forward_cached(&t.state, &mut cache)?;
        if t.action >= n_out {
            return Err(Error::Domain(format!("action {} outside {} outputs", t.action, n_out)));
        }
        let delta = y - q[t.action];
        loss += delta * delta;
        dq.iter_mut().for_each(|v| *v = 0.0);
        dq[t.action] = -delta / b;
        online.backward(&t.state, &cache, &dq, &mut grad);
    }
    let loss = loss / (2.0 * b);
    if !loss.is_finite() {
        return Err(Error::NonFinite("TD loss".into()));
    }
    Ok((grad, loss))
}

#[derive(Debug, Clone)]
pub struct DdqnAgent {
    pub config: DdqnConfig,
    pub online: NetParams,
    pub target: NetParams,
    pub optimizer: RmsProp,
    pub replay: ReplayMemory,
    /// Transitions observed so far.
    pub steps: u64,
    pub last_loss: Option<f64>,
    rng: ChaCha8Rng,
}

impl DdqnAgent {
    pub fn new(config: DdqnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let online = NetParams::init(config.arch.clone(), &mut rng)?;
        Ok(Self {
            target: online.clone(),
            optimizer: RmsProp::new(online.len(), config.lr),
            replay: ReplayMemory::new(config.replay_capacity)?,
            online,
            steps: 0,
            last_loss: None,
            config,
            rng,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.config.schedule.value(self.steps)
    }

    /// Overwrites both online and target parameters.
    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.online.len() {
            return Err(Error::ShapeMismatch {
                expected: self.online.len(),
                actual: theta.len(),
            });
        }
        self.online.theta.copy_from_slice(theta);
        self.target.theta.copy_from_slice(theta);
        Ok(())
    }

    /// One minibatch gradient step; no-op until the memory holds a batch.
    pub fn learn(&mut self) -> Result<Option<f64>> {
        if self.replay.len() < self.config.batch {
            return Ok(None);
        }
        let batch = self.replay.sample(self.config.batch, &mut self.rng)?;
        let (grad, loss) = td_gradient(&batch, &self.online, &self.target, self.config.gamma, self.config.target_mode)?;
        self.optimizer.step(&mut self.online.theta, &grad)?;
        if !self.online.is_finite() {
            return Err(Error::NonFinite("network parameters after update".into()));
        }
        self.last_loss = Some(loss);
        Ok(Some(loss))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            arch: self.online.arch.clone(),
            theta: self.online.theta.clone(),
            target: self.target.theta.clone(),
            rms_v: self.optimizer.v.clone(),
            steps: self.steps,
            rng_seed: self.rng.get_seed(),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos(),
        }
    }

    /// Restores parameters, optimizer state, step count and RNG position.
    /// The replay memory is not part of a checkpoint and is left as is.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        if ck.arch != self.online.arch {
            return Err(Error::Checkpoint(format!("architecture {:?} does not match {:?}", ck.arch, self.online.arch)));
        }
        let n = self.online.len();
        for (name, v) in [("theta", &ck.theta), ("target", &ck.target), ("rmsprop", &ck.rms_v)] {
            if v.len() != n {
                return Err(Error::Checkpoint(format!("{name} has {} values, expected {n}", v.len())));
            }
        }
        self.online.theta.clone_from(&ck.theta);
        self.target.theta.clone_from(&ck.target);
        self.optimizer.v.clone_from(&ck.rms_v);
        self.steps = ck.steps;
        let mut rng = ChaCha8Rng::from_seed(ck.rng_seed);
        rng.set_stream(ck.rng_stream);
        rng.set_word_pos(ck.rng_word_pos);
        self.rng = rng;
        Ok(())
    }
}

impl Agent for DdqnAgent {
    fn act(&mut self, obs: &[f64], greedy: bool) -> Result<usize> {
        let eps = if greedy { 0.0 } else { self.epsilon() };
        select_action(&self.online, obs, eps, &mut self.rng)
    }

    fn observe(&mut self, t: Transition) -> Result<()> {
        self.replay.push(t);
        self.steps += 1;
        self.learn()?;
        sync_target(&self.online, &mut self.target, self.steps, self.config.target_sync);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_transition<R: Rng>(rng: &mut R, n_in: usize, n_out: usize) -> Transition {
        Transition {
            state: (0..n_in).map(|_| rng.random_range(0.0..1.0)).collect(),
            action: rng.random_range(0..n_out),
            reward: rng.random_range(-1.0..1.0),
            next_state: (0..n_in).map(|_| rng.random_range(0.0..1.0)).collect(),
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let p = NetParams::zeros(Arch::mlp(vec![2, 2])).unwrap();
        assert!(matches!(td_gradient(&[], &p, &p, 0.9, TargetMode::Double), Err(Error::EmptyBatch)));
    }

    #[test]
    fn zero_td_error_gives_zero_gradient() {
        // All-zero net, zero rewards: y = 0 = Q everywhere.
        let p = NetParams::zeros(Arch::mlp(vec![3, 4, 2])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch: Vec<Transition> = (0..8)
            .map(|_| Transition {
                reward: 0.0,
                ..random_transition(&mut rng, 3, 2)
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let (g, loss) = td_gradient(&refs, &p, &p, 0.9, TargetMode::Double).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_sample_linear_net_by_hand() {
        // Q(s) = w s + b with one action; target y = r + γ (w s' + b).
        let mut p = NetParams::zeros(Arch::mlp(vec![1, 1])).unwrap();
        p.theta = vec![0.5, 0.1];
        let t = Transition {
            state: vec![2.0],
            action: 0,
            reward: 1.0,
            next_state: vec![4.0],
        };
        let (g, loss) = td_gradient(&[&t], &p, &p, 0.5, TargetMode::Double).unwrap();
        let y = 1.0 + 0.5 * (0.5 * 4.0 + 0.1);
        let q = 0.5 * 2.0 + 0.1;
        let delta = y - q;
        assert!((loss - delta * delta / 2.0).abs() < 1e-12);
        assert!((g[0] + delta * 2.0).abs() < 1e-12);
        assert!((g[1] + delta).abs() < 1e-12);
    }

    #[test]
    fn td_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let arch = Arch::mlp(vec![3, 6, 4]);
        let online = NetParams::init(arch.clone(), &mut rng).unwrap();
        let target = NetParams::init(arch, &mut rng).unwrap();
        let batch: Vec<Transition> = (0..6).map(|_| random_transition(&mut rng, 3, 4)).collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        for mode in [TargetMode::Double, TargetMode::PaperLiteral] {
            let (g, _) = td_gradient(&refs, &online, &target, 0.9, mode).unwrap();
            // Semi-gradient: the target is held fixed, so differentiate only
            // the prediction term with the targets frozen.
            let targets: Vec<f64> = refs
                .iter()
                .map(|t| {
                    let qt = target.forward(&t.next_state).unwrap();
                    let a = match mode {
                        TargetMode::Double => argmax(&online.forward(&t.next_state).unwrap()),
                        TargetMode::PaperLiteral => argmax(&qt),
                    };
                    t.reward + 0.9 * qt[a]
                })
                .collect();
            let loss_at = |p: &NetParams| -> f64 {
                refs.iter()
                    .zip(&targets)
                    .map(|(t, y)| (y - p.forward(&t.state).unwrap()[t.action]).powi(2))
                    .sum::<f64>()
                    / (2.0 * refs.len() as f64)
            };
            let h = 1e-6;
            for i in 0..online.len() {
                let mut a = online.clone();
                a.theta[i] += h;
                let mut b = online.clone();
                b.theta[i] -= h;
                let num = (loss_at(&a) - loss_at(&b)) / (2.0 * h);
                let scale = num.abs().max(g[i].abs()).max(1e-7);
                assert!((num - g[i]).abs() / scale < 1e-4, "param {i}: {num} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn double_target_does_not_exceed_vanilla_target() {
        // Over random nets, the double target never exceeds the max over the
        // target net; a sign test over strict differences confirms the bias
        // reduction is systematic.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let arch = Arch::Gru {
            input: 2,
            steps: 3,
            hidden: 5,
            output: 11,
        };
        let (mut below, mut above) = (0u32, 0u32);
        for _ in 0..1000 {
            let online = NetParams::init(arch.clone(), &mut rng).unwrap();
            let target = NetParams::init(arch.clone(), &mut rng).unwrap();
            let s: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
            let qt = target.forward(&s).unwrap();
            let double = qt[argmax(&online.forward(&s).unwrap())];
            let vanilla = qt[argmax(&qt)];
            if double < vanilla {
                below += 1;
            } else if double > vanilla {
                above += 1;
            }
        }
        assert_eq!(above, 0);
        // One-sided sign test: P(Bin(n, 1/2) ≥ below) is negligible.
        let n = below + above;
        assert!(below as f64 > n as f64 / 2.0 + 3.0 * (n as f64).sqrt() / 2.0);
    }

    #[test]
    fn agent_learns_after_one_batch_and_syncs() {
        let mut cfg = DdqnConfig::new(Arch::mlp(vec![2, 8, 3]), 100, 1);
        cfg.batch = 4;
        cfg.target_sync = 5;
        cfg.lr = 1e-2;
        let mut agent = DdqnAgent::new(cfg).unwrap();
        let start = agent.online.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..5 {
            agent.observe(random_transition(&mut rng, 2, 3)).unwrap();
            if i < 3 {
                assert_eq!(agent.online, start);
            }
        }
        assert_ne!(agent.online, start);
        assert_eq!(agent.online, agent.target);
        assert!(agent.last_loss.is_some());
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = DdqnConfig::new(Arch::mlp(vec![2, 3]), 10, 0);
        for bad in [
            DdqnConfig { gamma: 1.0, ..base.clone() },
            DdqnConfig { lr: 0.0, ..base.clone() },
            DdqnConfig { batch: 0, ..base.clone() },
            DdqnConfig { target_sync: 0, ..base.clone() },
        ] {
            assert!(DdqnAgent::new(bad).is_err());
        }
    }
}
