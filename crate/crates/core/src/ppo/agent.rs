use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::loss::{advantages, clip_loss, rewards_to_go, standardize, value_loss, Transition};
use super::mlp::Mlp;
use super::policy::{GaussianPolicy, PolicyGrad};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    /// Hidden layer widths shared by actor and critic.
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// `gamma`
    pub discount: f64,
    /// `epsilon`
    pub clip_epsilon: f64,
    /// `E`
    pub epochs: usize,
    pub minibatch: usize,
    pub standardize_advantages: bool,
    pub entropy_coef: f64,
    pub init_log_std: f64,
    /// Scale of the actor's output layer at initialization.
    pub actor_out_scale: f64,
    /// Multiplier on rewards before returns are computed.
    pub reward_scale: f64,
    /// Episodes collected per update.
    pub batch_episodes: usize,
    /// Decay both learning rates to zero over training on a half cosine.
    pub anneal_lr: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            hidden: vec![64, 64],
            actor_lr: 1e-3,
            critic_lr: 3e-3,
            discount: 0.95,
            clip_epsilon: 0.2,
            epochs: 4,
            minibatch: 32,
            standardize_advantages: true,
            entropy_coef: 0.0,
            init_log_std: -0.7,
            actor_out_scale: 0.01,
            reward_scale: 0.1,
            batch_episodes: 1,
            anneal_lr: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("ppo: {m}")));
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be > 0");
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount must be in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip epsilon must be in (0, 1)");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.batch_episodes == 0 {
            return bad("epochs, minibatch and batch episodes must be >= 1");
        }
        if !(self.entropy_coef >= 0.0) || !self.init_log_std.is_finite() || !(self.reward_scale > 0.0) {
            return bad("entropy coefficient, initial log-std or reward scale out of range");
        }
        if !(self.actor_out_scale > 0.0) {
            return bad("actor output scale must be > 0");
        }
        Ok(())
    }

    pub fn actor_sizes(&self, state_dim: usize, action_dim: usize) -> Vec<usize> {
        let mut s = vec![state_dim];
        s.extend(&self.hidden);
        s.push(action_dim);
        s
    }

    pub fn critic_sizes(&self, state_dim: usize) -> Vec<usize> {
        self.actor_sizes(state_dim, 1)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    /// Clip loss averaged over minibatches of the first epoch.
    pub policy_loss: f64,
    /// Value loss averaged over minibatches of the first epoch.
    pub value_loss: f64,
    /// Share of samples whose ratio left `[1-eps, 1+eps]` in the last epoch.
    pub clip_fraction: f64,
    /// Mean of `old log-prob - new log-prob` after the update.
    pub approx_kl: f64,
    pub mean_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub policy: GaussianPolicy,
    pub critic: Mlp,
    cfg: PpoConfig,
    actor_opt: Adam,
    log_std_opt: Adam,
    critic_opt: Adam,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, cfg: PpoConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mean = Mlp::new(&cfg.actor_sizes(state_dim, action_dim), cfg.actor_out_scale, rng)?;
        let critic = Mlp::new(&cfg.critic_sizes(state_dim), 1.0, rng)?;
        Ok(Self::from_parts(GaussianPolicy::new(mean, cfg.init_log_std), critic, cfg))
    }

    /// Wrap existing networks with fresh optimizer state.
    pub fn from_parts(policy: GaussianPolicy, critic: Mlp, cfg: PpoConfig) -> Self {
        Agent {
            actor_opt: Adam::new(policy.mean.num_params(), cfg.actor_lr),
            log_std_opt: Adam::new(policy.log_std.len(), cfg.actor_lr),
            critic_opt: Adam::new(critic.num_params(), cfg.critic_lr),
            policy,
            critic,
            cfg,
        }
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn state_dim(&self) -> usize {
        self.critic.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.policy.action_dim()
    }

    /// Scale both learning rates to `frac` of their configured values.
    pub fn set_lr_fraction(&mut self, frac: f64) {
        self.actor_opt.lr = self.cfg.actor_lr * frac;
        self.log_std_opt.lr = self.cfg.actor_lr * frac;
        self.critic_opt.lr = self.cfg.critic_lr * frac;
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
        self.policy.sample(state, rng)
    }

    pub fn act_deterministic(&self, state: &[f64]) -> Vec<f64> {
        self.policy.mean_action(state)
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        self.critic.forward(state)[0]
    }

    /// Scaled rewards-to-go over a buffer of whole episodes (split at `done`).
    pub fn returns(&self, buffer: &[Transition]) -> Vec<f64> {
        let mut out = Vec::with_capacity(buffer.len());
        let mut start = 0;
        for (i, tr) in buffer.iter().enumerate() {
            if tr.done || i + 1 == buffer.len() {
                let r: Vec<f64> = buffer[start..=i].iter().map(|t| t.reward * self.cfg.reward_scale).collect();
                out.extend(rewards_to_go(&r, self.cfg.discount));
                start = i + 1;
            }
        }
        out
    }

    /// PPO update on one on-policy buffer. On a non-finite gradient the
    /// agent is restored to its state before the call.
    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &[Transition], rng: &mut R) -> Result<UpdateStats> {
        if buffer.is_empty() {
            return Err(Error::Empty);
        }
        let snapshot = self.clone();
        let result = self.update_inner(buffer, rng);
        if result.is_err() {
            *self = snapshot;
        }
        result
    }

    fn update_inner<R: Rng + ?Sized>(&mut self, buffer: &[Transition], rng: &mut R) -> Result<UpdateStats> {
        let returns = self.returns(buffer);
        let values: Vec<f64> = buffer.iter().map(|t| self.value(&t.state)).collect();
        let mut adv = advantages(&returns, &values)?;
        if self.cfg.standardize_advantages {
            standardize(&mut adv);
        }
        let eps = self.cfg.clip_epsilon;
        let mut idx: Vec<usize> = (0..buffer.len()).collect();
        let mut stats = UpdateStats::default();
        let mut first_batches = 0usize;
        for epoch in 0..self.cfg.epochs {
            idx.shuffle(rng);
            for chunk in idx.chunks(self.cfg.minibatch) {
                let batch: Vec<&Transition> = chunk.iter().map(|&i| &buffer[i]).collect();
                let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
                let j: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();

                let mut pg = PolicyGrad::zeros(&self.policy);
                let pl = clip_loss(&self.policy, &batch, &a, eps, self.cfg.entropy_coef, Some(&mut pg));
                let mut vg = vec![0.0; self.critic.num_params()];
                let vl = value_loss(&self.critic, &batch, &j, Some(&mut vg));
                if !pg.is_finite() || !pl.is_finite() {
                    return Err(Error::NonFiniteGradient { context: format!("actor, epoch {epoch}") });
                }
                if vg.iter().any(|g| !g.is_finite()) || !vl.is_finite() {
                    return Err(Error::NonFiniteGradient { context: format!("critic, epoch {epoch}") });
                }
                self.actor_opt.step(self.policy.mean.params_mut(), &pg.mean);
                self.log_std_opt.step(&mut self.policy.log_std, &pg.log_std);
                self.policy.clamp_log_std();
                self.critic_opt.step(self.critic.params_mut(), &vg);
                if epoch == 0 {
                    stats.policy_loss += pl;
                    stats.value_loss += vl;
                    first_batches += 1;
                }
            }
        }
        stats.policy_loss /= first_batches as f64;
        stats.value_loss /= first_batches as f64;
        let mut clipped = 0usize;
        let mut kl = 0.0;
        for tr in buffer {
            let lp = self.policy.log_prob(&tr.state, &tr.action);
            let ratio = (lp - tr.log_prob).exp();
            if (ratio - 1.0).abs() > eps {
                clipped += 1;
            }
            kl += tr.log_prob - lp;
        }
        stats.clip_fraction = clipped as f64 / buffer.len() as f64;
        stats.approx_kl = kl / buffer.len() as f64;
        let std = self.policy.std();
        stats.mean_std = std.iter().sum::<f64>() / std.len() as f64;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> PpoConfig {
        PpoConfig { hidden: vec![8], minibatch: 4, ..PpoConfig::default() }
    }

    fn rollout(agent: &Agent, rng: &mut ChaCha8Rng, n: usize, reward: impl Fn(&[f64]) -> f64) -> Vec<Transition> {
        (0..n)
            .map(|t| {
                let s: Vec<f64> = (0..agent.state_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let (a, lp) = agent.act(&s, rng);
                Transition {
                    reward: reward(&a),
                    state: s.clone(),
                    action: a,
                    log_prob: lp,
                    next_state: s,
                    done: t + 1 == n,
                }
            })
            .collect()
    }

    #[test]
    fn zero_advantage_leaves_actor_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = PpoConfig { standardize_advantages: false, reward_scale: 1.0, ..small_cfg() };
        let mut agent = Agent::new(3, 2, cfg, &mut rng).unwrap();
        let buf = rollout(&agent, &mut rng, 8, |_| 0.0);
        // A = J - V = 0 with zero rewards and a zero critic.
        agent.critic.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let before = agent.policy.clone();
        agent.update(&buf, &mut rng).unwrap();
        assert_eq!(agent.policy, before);
    }

    #[test]
    fn quadratic_critic_toy_converges() {
        // One-parameter critic V(s) = b on a constant target: minimizer b = 3.
        let cfg = PpoConfig { critic_lr: 0.05, ..PpoConfig::default() };
        let mut critic = Mlp::from_params(vec![1, 1], vec![0.0, 0.0]).unwrap();
        let mut opt = Adam::new(2, cfg.critic_lr);
        let tr = Transition { state: vec![0.0], action: vec![], log_prob: 0.0, reward: 0.0, next_state: vec![0.0], done: true };
        for _ in 0..200 {
            let mut g = vec![0.0; 2];
            value_loss(&critic, &[&tr], &[3.0], Some(&mut g));
            opt.step(critic.params_mut(), &g);
        }
        assert!((critic.forward(&[0.0])[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn policy_learns_a_bandit() {
        // Reward peaks at action (1, -1).
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = PpoConfig { hidden: vec![16], actor_lr: 3e-3, minibatch: 32, actor_out_scale: 0.1, ..PpoConfig::default() };
        let mut agent = Agent::new(2, 2, cfg, &mut rng).unwrap();
        let reward = |a: &[f64]| -((a[0] - 1.0).powi(2) + (a[1] + 1.0).powi(2));
        for _ in 0..150 {
            let buf = rollout(&agent, &mut rng, 64, reward);
            agent.update(&buf, &mut rng).unwrap();
        }
        let m = agent.act_deterministic(&[0.3, -0.2]);
        assert!((m[0] - 1.0).abs() < 0.3 && (m[1] + 1.0).abs() < 0.3, "mean {m:?}");
    }

    #[test]
    fn non_finite_gradient_aborts_and_restores() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = Agent::new(3, 2, small_cfg(), &mut rng).unwrap();
        let mut buf = rollout(&agent, &mut rng, 8, |_| 1.0);
        buf[3].reward = f64::NAN;
        let before = agent.clone();
        assert!(matches!(agent.update(&buf, &mut rng), Err(Error::NonFiniteGradient { .. })));
        assert_eq!(agent, before);
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mut agent = Agent::new(3, 2, small_cfg(), &mut rng).unwrap();
            for _ in 0..3 {
                let buf = rollout(&agent, &mut rng, 16, |a| a[0]);
                agent.update(&buf, &mut rng).unwrap();
            }
            agent
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { clip_epsilon: 1.0, ..PpoConfig::default() }.validate().is_err());
        assert!(PpoConfig { discount: 1.5, ..PpoConfig::default() }.validate().is_err());
        assert!(PpoConfig { epochs: 0, ..PpoConfig::default() }.validate().is_err());
    }
}
