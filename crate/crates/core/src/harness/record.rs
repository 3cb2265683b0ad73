//! Run records: per-slot rows plus aggregates recomputable from them.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::online::Mode;
use crate::econ::{CoalitionId, Player, SlotSettlement};
use crate::env::ConstraintAudit;
use crate::error::{Error, Result};
use crate::game::{check_ne_trace, is_stable, Partition, PreferenceContext, SlotTrace};

pub const RECORD_FORMAT: &str = "rcfg-run";
pub const RECORD_VERSION: u32 = 1;

/// The seven utilities a slot's preferences are built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextRow {
    pub lp_with_tirs: f64,
    pub lp_alone: f64,
    pub ev_with_tirs: f64,
    pub ev_alone: f64,
    pub tirs_with_lp: f64,
    pub tirs_with_ev: f64,
    pub tirs_alone: f64,
}

impl ContextRow {
    pub fn of(s: &SlotSettlement) -> Self {
        ContextRow {
            lp_with_tirs: s.with_lp.lp,
            lp_alone: s.with_ev.lp,
            ev_with_tirs: s.with_ev.ev,
            ev_alone: s.with_lp.ev,
            tirs_with_lp: s.with_lp.tirs,
            tirs_with_ev: s.with_ev.tirs,
            tirs_alone: s.tirs_alone,
        }
    }

    pub fn context(&self) -> PreferenceContext {
        let mut ctx = PreferenceContext::new();
        ctx.set(Player::Lp, CoalitionId::LpTirs, self.lp_with_tirs)
            .set(Player::Lp, CoalitionId::Lp, self.lp_alone)
            .set(Player::Ev, CoalitionId::EvTirs, self.ev_with_tirs)
            .set(Player::Ev, CoalitionId::Ev, self.ev_alone)
            .set(Player::Tirs, CoalitionId::LpTirs, self.tirs_with_lp)
            .set(Player::Tirs, CoalitionId::EvTirs, self.tirs_with_ev)
            .set(Player::Tirs, CoalitionId::Tirs, self.tirs_alone);
        ctx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRow {
    pub slot: usize,
    pub channel_digest: String,
    /// TIRS side before the switch loop (1 = LP).
    pub start_c1: u8,
    /// Played side (1 = LP).
    pub c1: u8,
    pub switches: usize,
    pub passes: usize,
    pub inner_iters: usize,
    pub inner_converged: bool,
    pub stable: bool,
    pub u_lp: f64,
    pub u_ev: f64,
    pub u_tirs: f64,
    /// Payment made this slot.
    pub payment: f64,
    pub mu_lp: f64,
    pub mu_ev: f64,
    pub punishment: f64,
    pub secrecy_sum: f64,
    pub secrecy: Vec<f64>,
    pub reward_lp_side: f64,
    pub reward_ev_side: f64,
    pub penalized: usize,
    pub e_lp: f64,
    pub e_ev: f64,
    pub e_tirs: f64,
    pub context: ContextRow,
}

impl SlotRow {
    pub fn partition(&self) -> Partition {
        Partition::from_c1(self.c1)
    }
}

/// Sums over a block of consecutive slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub first_slot: usize,
    pub slots: usize,
    pub u_lp: f64,
    pub u_ev: f64,
    pub u_tirs: f64,
    pub lp_share: f64,
}

impl Aggregate {
    fn of(rows: &[SlotRow]) -> Self {
        Aggregate {
            first_slot: rows.first().map_or(0, |r| r.slot),
            slots: rows.len(),
            u_lp: rows.iter().map(|r| r.u_lp).sum(),
            u_ev: rows.iter().map(|r| r.u_ev).sum(),
            u_tirs: rows.iter().map(|r| r.u_tirs).sum(),
            lp_share: rows.iter().map(|r| f64::from(r.c1)).sum::<f64>() / rows.len().max(1) as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub slots: usize,
    pub cumulative: [f64; 3],
    /// Time averages, [`Player::index`] order.
    pub mean: [f64; 3],
    pub cumulative_payment: f64,
    pub mean_secrecy_sum: f64,
    /// Fraction of slots with the TIRS on the LP side.
    pub occupancy_lp: f64,
    pub occupancy_ev: f64,
    /// Executed switch operations.
    pub switches: usize,
    /// Slots whose played side differs from the previous slot's.
    pub side_changes: usize,
    pub stable_fraction: f64,
    pub inner_unconverged: usize,
    /// Time-averaged best accepted deviation gain per player.
    pub ne_gains: [f64; 3],
    pub audit: ConstraintAudit,
}

impl Summary {
    pub fn of(rows: &[SlotRow], audit: ConstraintAudit) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty);
        }
        let n = rows.len() as f64;
        let cum = [
            rows.iter().map(|r| r.u_lp).sum::<f64>(),
            rows.iter().map(|r| r.u_ev).sum::<f64>(),
            rows.iter().map(|r| r.u_tirs).sum::<f64>(),
        ];
        let lp = rows.iter().filter(|r| r.c1 == 1).count() as f64 / n;
        let trace: Vec<SlotTrace> = rows
            .iter()
            .map(|r| SlotTrace { played: r.partition(), context: r.context.context() })
            .collect();
        Ok(Summary {
            slots: rows.len(),
            cumulative: cum,
            mean: cum.map(|c| c / n),
            cumulative_payment: rows.iter().map(|r| r.payment).sum(),
            mean_secrecy_sum: rows.iter().map(|r| r.secrecy_sum).sum::<f64>() / n,
            occupancy_lp: lp,
            occupancy_ev: 1.0 - lp,
            switches: rows.iter().map(|r| r.switches).sum(),
            side_changes: rows.windows(2).filter(|w| w[0].c1 != w[1].c1).count(),
            stable_fraction: rows.iter().filter(|r| r.stable).count() as f64 / n,
            inner_unconverged: rows.iter().filter(|r| !r.inner_converged).count(),
            ne_gains: check_ne_trace(&trace)?.gains,
            audit,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format: String,
    pub version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: String,
    pub training_hash: String,
    pub config: ExperimentConfig,
    pub slots: Vec<SlotRow>,
    /// Sums over blocks of `episode_len` slots.
    pub episodes: Vec<Aggregate>,
    pub summary: Summary,
}

impl RunRecord {
    pub fn new(
        mode: Mode,
        seed: u64,
        config: &ExperimentConfig,
        slots: Vec<SlotRow>,
        audit: ConstraintAudit,
    ) -> Result<Self> {
        let summary = Summary::of(&slots, audit)?;
        let episodes = slots.chunks(config.training.episode_len).map(Aggregate::of).collect();
        Ok(RunRecord {
            format: RECORD_FORMAT.into(),
            version: RECORD_VERSION,
            mode,
            seed,
            config_hash: config.config_hash(),
            training_hash: config.training_hash(seed),
            config: config.clone(),
            slots,
            episodes,
            summary,
        })
    }

    /// Recompute aggregates and per-slot stability from the rows; the
    /// message names the first disagreement.
    pub fn verify(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidParameter(format!("record check: {m}")));
        let again = Summary::of(&self.slots, self.summary.audit)?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
        for p in Player::ALL {
            let i = p.index();
            if !close(again.cumulative[i], self.summary.cumulative[i]) || !close(again.mean[i], self.summary.mean[i]) {
                return fail(format!("cumulative utility of {p}"));
            }
            if !close(again.ne_gains[i], self.summary.ne_gains[i]) {
                return fail(format!("equilibrium gain of {p}"));
            }
        }
        if again.switches != self.summary.switches
            || again.side_changes != self.summary.side_changes
            || !close(again.occupancy_lp, self.summary.occupancy_lp)
            || !close(again.stable_fraction, self.summary.stable_fraction)
            || !close(again.cumulative_payment, self.summary.cumulative_payment)
        {
            return fail("occupancy, switch, stability or payment totals".into());
        }
        let episodes: Vec<Aggregate> = self.slots.chunks(self.config.training.episode_len).map(Aggregate::of).collect();
        if episodes.len() != self.episodes.len()
            || episodes.iter().zip(&self.episodes).any(|(a, b)| {
                a.slots != b.slots || !close(a.u_lp, b.u_lp) || !close(a.u_ev, b.u_ev) || !close(a.u_tirs, b.u_tirs)
            })
        {
            return fail("episode aggregates".into());
        }
        for r in &self.slots {
            if r.stable != is_stable(r.partition(), &r.context.context())? {
                return fail(format!("stability flag of slot {}", r.slot));
            }
        }
        Ok(())
    }
}
