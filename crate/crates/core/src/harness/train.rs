//! Offline pretraining: the four coalition agents learn in lockstep on one
//! channel stream.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{stream_rng, streams};
use crate::econ::{CoalitionId, EconHistory};
use crate::env::{decode_and_project, ActionFragment, ConstraintAudit, Dims, GameEnv, JointOutcome, AGENT_COALITIONS};
use crate::error::{Error, Result};
use crate::game::{run_switch_dynamics, Partition, PreferenceContext};
use crate::ppo::{Agent, Checkpoint, Transition};

/// One agent per coalition, in [`AGENT_COALITIONS`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSet {
    pub agents: Vec<Agent>,
}

impl AgentSet {
    pub fn get(&self, c: CoalitionId) -> &Agent {
        &self.agents[slot_of(c)]
    }

    pub fn get_mut(&mut self, c: CoalitionId) -> &mut Agent {
        &mut self.agents[slot_of(c)]
    }

    pub fn save(&self, dir: &Path, config_hash: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (c, agent) in AGENT_COALITIONS.iter().zip(&self.agents) {
            Checkpoint::of(agent, c.label(), config_hash).save(&dir.join(format!("{}.json", c.label())))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, cfg: &ExperimentConfig, config_hash: &str) -> Result<Self> {
        let dims = Dims::of(&cfg.geometry());
        let mut agents = Vec::with_capacity(4);
        for c in AGENT_COALITIONS {
            let path = dir.join(format!("{}.json", c.label()));
            let ck = Checkpoint::load(&path)?;
            if ck.coalition != c.label() {
                return Err(Error::Checkpoint(format!(
                    "{} holds coalition {}, expected {}",
                    path.display(),
                    ck.coalition,
                    c.label()
                )));
            }
            let agent = ck
                .into_agent(&cfg.ppo, dims.state_dim(c), dims.action_dim(c), config_hash)
                .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
            agents.push(agent);
        }
        Ok(AgentSet { agents })
    }
}

fn slot_of(c: CoalitionId) -> usize {
    AGENT_COALITIONS
        .iter()
        .position(|&a| a == c)
        .unwrap_or_else(|| panic!("{c} has no agent"))
}

/// Per-episode training curve entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    /// Cumulative utilities of the partition the switch rule selects each
    /// slot, while exploring.
    pub u_lp: f64,
    pub u_ev: f64,
    pub u_tirs: f64,
    /// The same after the episode's update, with mean actions on one fixed
    /// set of channel draws.
    pub eval_lp: f64,
    pub eval_ev: f64,
    pub eval_tirs: f64,
    /// Fraction of slots with the TIRS on the LP side.
    pub lp_share: f64,
    pub switches: usize,
    /// Cumulative reward per agent, [`AGENT_COALITIONS`] order.
    pub rewards: [f64; 4],
    /// Slots x LRs below the secrecy threshold, summed over both partitions.
    pub penalized: usize,
    /// Mean policy standard deviation after the episode's update.
    pub mean_std: [f64; 4],
}

#[derive(Clone, Debug)]
pub struct PretrainReport {
    pub seed: u64,
    pub training_hash: String,
    pub agents: AgentSet,
    pub curve: Vec<EpisodeRow>,
    pub audit: ConstraintAudit,
}

impl PretrainReport {
    /// Checkpoints plus `training_curve.csv` under `dir`.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        self.agents.save(dir, &self.training_hash)?;
        super::output::emit_training_curve(&self.curve, &self.training_hash, self.seed, &dir.join("training_curve.csv"))
    }
}

pub fn offline_pretrain(cfg: &ExperimentConfig, seed: u64) -> Result<PretrainReport> {
    offline_pretrain_with(cfg, seed, |_| {})
}

/// As [`offline_pretrain`], calling `progress` after every episode.
pub fn offline_pretrain_with(
    cfg: &ExperimentConfig,
    seed: u64,
    mut progress: impl FnMut(&EpisodeRow),
) -> Result<PretrainReport> {
    cfg.validate()?;
    let geom = cfg.geometry();
    let dims = Dims::of(&geom);
    let pp = cfg.power_params();
    let mut ch_rng = stream_rng(seed, streams::PRETRAIN_CHANNEL);
    let mut env = GameEnv::new(&geom, &cfg.fading_params(), pp.clone(), cfg.env_config(), &mut ch_rng)?;
    let mut eval_env = env.clone();

    let mut rngs: Vec<_> = (0..4).map(|i| stream_rng(seed, streams::AGENT_BASE + i as u64)).collect();
    let mut agents = Vec::with_capacity(4);
    for (c, rng) in AGENT_COALITIONS.iter().zip(rngs.iter_mut()) {
        agents.push(Agent::new(dims.state_dim(*c), dims.action_dim(*c), cfg.ppo.clone(), rng)?);
    }
    let mut set = AgentSet { agents };

    let gamma = cfg.training.episode_len;
    let mut buffers: Vec<Vec<Transition>> = vec![Vec::new(); 4];
    let mut curve = Vec::with_capacity(cfg.training.episodes);
    for episode in 0..cfg.training.episodes {
        env.reset(&mut ch_rng);
        let mut history = EconHistory::default();
        let mut played = Partition::TirsWithLp;
        let mut row = EpisodeRow {
            episode,
            u_lp: 0.0,
            u_ev: 0.0,
            u_tirs: 0.0,
            eval_lp: 0.0,
            eval_ev: 0.0,
            eval_tirs: 0.0,
            lp_share: 0.0,
            switches: 0,
            rewards: [0.0; 4],
            penalized: 0,
            mean_std: [0.0; 4],
        };
        for tau in 0..gamma {
            let mut states = Vec::with_capacity(4);
            let mut actions = Vec::with_capacity(4);
            let mut frags: Vec<ActionFragment> = Vec::with_capacity(4);
            for (i, &c) in AGENT_COALITIONS.iter().enumerate() {
                let s = env.observe(c).values;
                let (a, lp) = set.agents[i].act(&s, &mut rngs[i]);
                frags.push(decode_and_project(&a, c, &dims, &pp)?);
                states.push(s);
                actions.push((a, lp));
            }
            let refs: Vec<(CoalitionId, &ActionFragment)> = AGENT_COALITIONS.iter().copied().zip(frags.iter()).collect();
            // Rewards do not depend on the history; it only shapes the curve.
            let out = env.step(&refs, &history, &mut ch_rng)?;
            for (i, ((s, (a, lp)), o)) in states.into_iter().zip(actions).zip(&out.outcomes).enumerate() {
                row.rewards[i] += o.reward;
                row.penalized += o.penalized;
                buffers[i].push(Transition {
                    state: s,
                    action: a,
                    log_prob: lp,
                    reward: o.reward,
                    next_state: o.next_state.values.clone(),
                    done: tau + 1 == gamma,
                });
            }
            let (u, switches) = select_partition(&out, &mut played, &mut history, cfg)?;
            row.u_lp += u[0];
            row.u_ev += u[1];
            row.u_tirs += u[2];
            row.switches += switches;
            row.lp_share += f64::from(played.c1());
        }
        row.lp_share /= gamma as f64;
        if (episode + 1) % cfg.ppo.batch_episodes == 0 || episode + 1 == cfg.training.episodes {
            let frac = 0.5 * (1.0 + (std::f64::consts::PI * episode as f64 / cfg.training.episodes as f64).cos());
            for (i, c) in AGENT_COALITIONS.iter().enumerate() {
                if cfg.ppo.anneal_lr {
                    set.agents[i].set_lr_fraction(frac);
                }
                let stats = set.agents[i].update(&buffers[i], &mut rngs[i]).map_err(|e| match e {
                    Error::NonFiniteGradient { context } => Error::NonFiniteGradient {
                        context: format!("{c} agent, episode {episode}: {context}"),
                    },
                    other => other,
                })?;
                row.mean_std[i] = stats.mean_std;
                buffers[i].clear();
            }
        } else {
            for i in 0..4 {
                let std = set.agents[i].policy.std();
                row.mean_std[i] = std.iter().sum::<f64>() / std.len() as f64;
            }
        }
        [row.eval_lp, row.eval_ev, row.eval_tirs] = evaluate_policies(&mut eval_env, &set, &dims, cfg, seed)?;
        progress(&row);
        curve.push(row);
    }
    let mut audit = *env.audit();
    audit.absorb(eval_env.audit());
    Ok(PretrainReport {
        seed,
        training_hash: cfg.training_hash(seed),
        agents: set,
        curve,
        audit,
    })
}

/// Run the switch rule from `played`, advance the history, and return the
/// selected partition's utilities with the number of switches.
fn select_partition(
    out: &JointOutcome,
    played: &mut Partition,
    history: &mut EconHistory,
    cfg: &ExperimentConfig,
) -> Result<([f64; 3], usize)> {
    let ctx = PreferenceContext::from_settlement(&out.settlement);
    let sw = run_switch_dynamics(&ctx, *played, &cfg.game.switch_order, cfg.game.max_switch_passes)?;
    *played = sw.partition;
    let report = out.settlement.report(played.c1());
    *history = history.advance(report);
    Ok(([report.lp, report.ev, report.tirs], sw.switches.len()))
}

/// Cumulative utilities of the mean policies over the fixed evaluation
/// channels.
fn evaluate_policies(env: &mut GameEnv, set: &AgentSet, dims: &Dims, cfg: &ExperimentConfig, seed: u64) -> Result<[f64; 3]> {
    let mut rng = stream_rng(seed, streams::EVAL_CHANNEL);
    env.reset(&mut rng);
    let pp = env.power().clone();
    let mut history = EconHistory::default();
    let mut played = Partition::TirsWithLp;
    let mut total = [0.0; 3];
    for _ in 0..cfg.training.episode_len {
        let frags = AGENT_COALITIONS
            .iter()
            .map(|&c| decode_and_project(&set.get(c).act_deterministic(&env.observe(c).values), c, dims, &pp))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<(CoalitionId, &ActionFragment)> = AGENT_COALITIONS.iter().copied().zip(frags.iter()).collect();
        let out = env.step(&refs, &history, &mut rng)?;
        let (u, _) = select_partition(&out, &mut played, &mut history, cfg)?;
        for k in 0..3 {
            total[k] += u[k];
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::PpoConfig;

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.ppo = PpoConfig { hidden: vec![8], minibatch: 4, epochs: 1, ..PpoConfig::default() };
        cfg.training.episodes = 1;
        cfg.training.episode_len = 4;
        cfg
    }

    #[test]
    fn smoke_run_writes_four_checkpoints() {
        let cfg = tiny_config();
        let report = offline_pretrain(&cfg, 7).unwrap();
        assert_eq!(report.curve.len(), 1);
        let dir = tempfile::tempdir().unwrap();
        report.persist(dir.path()).unwrap();
        for c in AGENT_COALITIONS {
            assert!(dir.path().join(format!("{}.json", c.label())).exists());
        }
        let back = AgentSet::load(dir.path(), &cfg, &cfg.training_hash(7)).unwrap();
        for (a, b) in back.agents.iter().zip(&report.agents.agents) {
            assert_eq!((&a.policy, &a.critic), (&b.policy, &b.critic));
        }
        assert!(AgentSet::load(dir.path(), &cfg, &cfg.training_hash(8)).is_err());
    }

    #[test]
    fn fixed_seed_reruns_match() {
        let mut cfg = tiny_config();
        cfg.training.episodes = 2;
        let a = offline_pretrain(&cfg, 3).unwrap();
        let b = offline_pretrain(&cfg, 3).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.agents, b.agents);
        let c = offline_pretrain(&cfg, 4).unwrap();
        assert_ne!(a.curve, c.curve);
    }

    #[test]
    fn audit_covers_every_step() {
        let mut cfg = tiny_config();
        cfg.training.episodes = 2;
        let r = offline_pretrain(&cfg, 1).unwrap();
        // Training and evaluation episodes, two partitions each.
        assert_eq!(r.audit.profiles, 2 * 2 * 2 * 4);
        assert_eq!(r.audit.violations(), 0);
    }
}
