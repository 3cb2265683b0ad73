//! Online stage of Algorithm 1 and the two fixed-partition baselines.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::record::{ContextRow, RunRecord, SlotRow};
use super::train::AgentSet;
use super::{stream_rng, streams};
use crate::econ::{CoalitionId, EconHistory};
use crate::env::{decode_and_project, ActionFragment, Dims, GameEnv, JointOutcome, AGENT_COALITIONS};
use crate::error::{Error, Result};
use crate::game::{is_stable, run_switch_dynamics, Partition, PreferenceContext};
use crate::ppo::Transition;

/// Which partition rule an online run follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Switch operations every slot.
    Proposed,
    /// TIRS always with the LP.
    Lfi,
    /// TIRS always with the EV.
    Efi,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::Lfi => "lfi",
            Mode::Efi => "efi",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn online_run(cfg: &ExperimentConfig, seed: u64, agents: &AgentSet) -> Result<RunRecord> {
    run_mode(cfg, seed, agents, Mode::Proposed)
}

pub fn run_baseline(cfg: &ExperimentConfig, seed: u64, agents: &AgentSet, which: Mode) -> Result<RunRecord> {
    if which == Mode::Proposed {
        return Err(Error::Config("baseline must be lfi or efi".into()));
    }
    run_mode(cfg, seed, agents, which)
}

/// Last evaluation of the inner loop.
struct Settled {
    out: JointOutcome,
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    iters: usize,
    converged: bool,
}

fn utilities(out: &JointOutcome) -> [f64; 6] {
    let (a, b) = (&out.settlement.with_lp, &out.settlement.with_ev);
    [a.lp, a.ev, a.tirs, b.lp, b.ev, b.tirs]
}

/// Let every agent act on the current slot until the utilities of both
/// partitions stop moving.
fn inner_loop(env: &mut GameEnv, agents: &AgentSet, dims: &Dims, cfg: &ExperimentConfig, history: &EconHistory) -> Result<Settled> {
    let o = &cfg.online;
    let pp = env.power().clone();
    let mut prev: Option<[f64; 6]> = None;
    let mut calm = 0;
    let mut iters = 0;
    loop {
        iters += 1;
        let mut states = Vec::with_capacity(4);
        let mut actions = Vec::with_capacity(4);
        let mut frags: Vec<ActionFragment> = Vec::with_capacity(4);
        for &c in &AGENT_COALITIONS {
            let s = env.observe(c).values;
            let a = agents.get(c).act_deterministic(&s);
            frags.push(decode_and_project(&a, c, dims, &pp)?);
            states.push(s);
            actions.push(a);
        }
        let refs: Vec<(CoalitionId, &ActionFragment)> = AGENT_COALITIONS.iter().copied().zip(frags.iter()).collect();
        let out = env.evaluate(&refs, history)?;
        let u = utilities(&out);
        if let Some(p) = prev {
            let still = u
                .iter()
                .zip(&p)
                .all(|(a, b)| (a - b).abs() <= o.inner_tolerance * a.abs().max(b.abs()).max(1e-12));
            calm = if still { calm + 1 } else { 0 };
        }
        prev = Some(u);
        let converged = calm >= o.inner_patience;
        if converged || iters >= o.inner_max_iters {
            return Ok(Settled { out, states, actions, iters, converged });
        }
    }
}

fn run_mode(cfg: &ExperimentConfig, seed: u64, agents: &AgentSet, mode: Mode) -> Result<RunRecord> {
    cfg.validate()?;
    let geom = cfg.geometry();
    let dims = Dims::of(&geom);
    for c in AGENT_COALITIONS {
        let a = agents.get(c);
        if a.state_dim() != dims.state_dim(c) || a.action_dim() != dims.action_dim(c) {
            return Err(Error::Checkpoint(format!("agent {c} does not fit the configured system")));
        }
    }
    let mut agents = agents.clone();
    let mut ch_rng = stream_rng(seed, streams::ONLINE_CHANNEL);
    let mut side_rng = stream_rng(seed, streams::TIRS_START);
    let mut tune_rng = stream_rng(seed, streams::FINE_TUNE);
    let mut env = GameEnv::new(&geom, &cfg.fading_params(), cfg.power_params(), cfg.env_config(), &mut ch_rng)?;

    let mut history = EconHistory::default();
    let mut rows = Vec::with_capacity(cfg.online.slots);
    let mut buffers: Vec<Vec<Transition>> = vec![Vec::new(); 4];
    for t in 0..cfg.online.slots {
        if t > 0 {
            env.advance(&mut ch_rng);
        }
        let settled = inner_loop(&mut env, &agents, &dims, cfg, &history)?;
        let out = &settled.out;
        let ctx = PreferenceContext::from_settlement(&out.settlement);
        let (start, partition, switches, passes) = match mode {
            Mode::Proposed => {
                let start = if side_rng.random_bool(0.5) { Partition::TirsWithLp } else { Partition::TirsWithEv };
                let sw = run_switch_dynamics(&ctx, start, &cfg.game.switch_order, cfg.game.max_switch_passes)?;
                (start, sw.partition, sw.switches.len(), sw.passes)
            }
            Mode::Lfi => (Partition::TirsWithLp, Partition::TirsWithLp, 0, 0),
            Mode::Efi => (Partition::TirsWithEv, Partition::TirsWithEv, 0, 0),
        };
        let report = out.settlement.report(partition.c1());
        let [lp_side, ev_side] = partition.coalitions();
        rows.push(SlotRow {
            slot: t,
            channel_digest: out.channel_digest.clone(),
            start_c1: start.c1(),
            c1: partition.c1(),
            switches,
            passes,
            inner_iters: settled.iters,
            inner_converged: settled.converged,
            stable: is_stable(partition, &ctx)?,
            u_lp: report.lp,
            u_ev: report.ev,
            u_tirs: report.tirs,
            payment: report.active_payment().paid,
            mu_lp: report.mu_lp.paid,
            mu_ev: report.mu_ev.paid,
            punishment: report.punishment,
            secrecy_sum: report.secrecy_sum,
            secrecy: report.secrecy.clone(),
            reward_lp_side: out.outcome(lp_side).reward,
            reward_ev_side: out.outcome(ev_side).reward,
            penalized: out.outcome(lp_side).penalized,
            e_lp: report.energies.lp,
            e_ev: report.energies.ev,
            e_tirs: report.energies.tirs,
            context: ContextRow::of(&out.settlement),
        });
        history = history.advance(report);

        if cfg.online.fine_tune {
            let done = (t + 1) % cfg.training.episode_len == 0 || t + 1 == cfg.online.slots;
            for (i, &c) in AGENT_COALITIONS.iter().enumerate() {
                let o = out.outcome(c);
                let agent = agents.get(c);
                buffers[i].push(Transition {
                    log_prob: agent.policy.log_prob(&settled.states[i], &settled.actions[i]),
                    state: settled.states[i].clone(),
                    action: settled.actions[i].clone(),
                    reward: o.reward,
                    next_state: o.next_state.values.clone(),
                    done,
                });
            }
            if done {
                for (i, &c) in AGENT_COALITIONS.iter().enumerate() {
                    agents.get_mut(c).update(&buffers[i], &mut tune_rng).map_err(|e| match e {
                        Error::NonFiniteGradient { context } => Error::NonFiniteGradient {
                            context: format!("online fine-tuning of {c}, slot {t}: {context}"),
                        },
                        other => other,
                    })?;
                    buffers[i].clear();
                }
            }
        }
    }
    RunRecord::new(mode, seed, cfg, rows, *env.audit())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::offline_pretrain;
    use crate::ppo::PpoConfig;

    fn setup(slots: usize) -> (ExperimentConfig, AgentSet) {
        let mut cfg = ExperimentConfig::default();
        cfg.ppo = PpoConfig { hidden: vec![8], minibatch: 8, epochs: 1, ..PpoConfig::default() };
        cfg.training.episodes = 2;
        cfg.training.episode_len = 8;
        cfg.online.slots = slots;
        let agents = offline_pretrain(&cfg, 5).unwrap().agents;
        (cfg, agents)
    }

    #[test]
    fn every_slot_ends_stable() {
        let (cfg, agents) = setup(10);
        let rec = online_run(&cfg, 5, &agents).unwrap();
        assert_eq!(rec.slots.len(), 10);
        for r in &rec.slots {
            assert!(r.stable, "slot {}", r.slot);
            assert!(is_stable(r.partition(), &r.context.context()).unwrap());
        }
        rec.verify().unwrap();
    }

    #[test]
    fn baselines_freeze_the_partition_and_share_channels() {
        let (cfg, agents) = setup(12);
        let lfi = run_baseline(&cfg, 5, &agents, Mode::Lfi).unwrap();
        let efi = run_baseline(&cfg, 5, &agents, Mode::Efi).unwrap();
        let prop = online_run(&cfg, 5, &agents).unwrap();
        assert!(lfi.slots.iter().all(|r| r.c1 == 1 && r.switches == 0));
        assert!(efi.slots.iter().all(|r| r.c1 == 0 && r.punishment == 0.0));
        for ((a, b), c) in lfi.slots.iter().zip(&efi.slots).zip(&prop.slots) {
            assert_eq!(a.channel_digest, b.channel_digest);
            assert_eq!(a.channel_digest, c.channel_digest);
        }
        assert!(run_baseline(&cfg, 5, &agents, Mode::Proposed).is_err());
    }

    #[test]
    fn huge_conflict_cost_pins_the_side_once_paid() {
        let (mut cfg, agents) = setup(20);
        cfg.game.conflict_cost = 1e12;
        let rec = online_run(&cfg, 5, &agents).unwrap();
        for w in rec.slots.windows(2) {
            // A paid TIRS would forfeit 1e12 times its last utility, so it never
            // switches away. It can still be left on the far side by a random
            // start that the old partner refuses to undo.
            if w[0].u_tirs > 0.0 && w[0].c1 != w[1].c1 {
                assert_eq!(w[1].start_c1, w[1].c1, "slot {}", w[1].slot);
                assert_eq!(w[1].switches, 0, "slot {}", w[1].slot);
            }
        }
    }

    #[test]
    fn zero_actions_leave_only_circuit_power() {
        let (cfg, mut agents) = setup(3);
        for a in &mut agents.agents {
            a.policy.mean.params_mut().iter_mut().for_each(|w| *w = 0.0);
        }
        let pp = cfg.power_params();
        let e_lp = pp.tx_circuit + 3.0 * pp.stream_circuit;
        let e_ev = pp.ev_circuit;
        let e_r = 32.0 * pp.element_power;
        let rho = pp.unit_power_cost;
        for mode in [Mode::Lfi, Mode::Efi] {
            let rec = run_baseline(&cfg, 2, &agents, mode).unwrap();
            for r in &rec.slots {
                let c1 = f64::from(r.c1);
                assert_eq!(r.secrecy_sum, 0.0);
                assert_eq!(r.payment, 0.0);
                assert!((r.u_lp + rho * (e_lp + c1 * e_r)).abs() < 1e-15);
                assert!((r.u_ev + rho * (e_ev + (1.0 - c1) * e_r)).abs() < 1e-15);
                assert_eq!(r.u_tirs, 0.0);
            }
        }
    }

    #[test]
    fn identical_inputs_give_identical_records() {
        let (cfg, agents) = setup(6);
        let a = serde_json::to_string(&online_run(&cfg, 9, &agents).unwrap()).unwrap();
        let b = serde_json::to_string(&online_run(&cfg, 9, &agents).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fine_tuning_changes_later_slots_only_when_enabled() {
        let (mut cfg, agents) = setup(16);
        let frozen = online_run(&cfg, 3, &agents).unwrap();
        cfg.online.fine_tune = true;
        let tuned = online_run(&cfg, 3, &agents).unwrap();
        assert_eq!(frozen.slots[..8], tuned.slots[..8]);
        assert_ne!(frozen.slots[8..], tuned.slots[8..]);
    }
}
