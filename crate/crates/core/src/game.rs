//! Preference order, switch rule and stability of coalition partitions.
//!
//! Only two partitions exist: `{{L,R},{E}}` and `{{L},{E,R}}`. A unilateral
//! move is considered only when it leads from one to the other, which in
//! practice means the TIRS changing sides.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::econ::{Coalition, CoalitionId, Player, SlotSettlement};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Partition {
    /// `{{L,R},{E}}`, `c1 = 1`.
    TirsWithLp,
    /// `{{L},{E,R}}`, `c1 = 0`.
    TirsWithEv,
}

impl Partition {
    pub const ALL: [Partition; 2] = [Partition::TirsWithLp, Partition::TirsWithEv];

    pub fn from_c1(c1: u8) -> Self {
        if c1 == 1 {
            Partition::TirsWithLp
        } else {
            Partition::TirsWithEv
        }
    }

    pub fn c1(self) -> u8 {
        match self {
            Partition::TirsWithLp => 1,
            Partition::TirsWithEv => 0,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Partition::TirsWithLp => Partition::TirsWithEv,
            Partition::TirsWithEv => Partition::TirsWithLp,
        }
    }

    pub fn coalitions(self) -> [CoalitionId; 2] {
        match self {
            Partition::TirsWithLp => [CoalitionId::LpTirs, CoalitionId::Ev],
            Partition::TirsWithEv => [CoalitionId::Lp, CoalitionId::EvTirs],
        }
    }

    pub fn coalition_of(self, p: Player) -> CoalitionId {
        self.coalitions()
            .into_iter()
            .find(|c| c.contains(p))
            .expect("every player sits in one coalition")
    }

    /// Partition after `player` leaves its coalition to join `target`, if
    /// the result is one of the two modelled partitions.
    pub fn after_move(self, player: Player, target: Coalition) -> Option<Partition> {
        let from = self.coalition_of(player).members();
        let known = target.is_empty() || self.coalitions().iter().any(|c| c.members() == target);
        if target.contains(player) || !known {
            return None;
        }
        let mut parts: Vec<Coalition> = self
            .coalitions()
            .iter()
            .map(|c| c.members())
            .filter(|c| *c != from && *c != target)
            .collect();
        let rest = from.without(player);
        if !rest.is_empty() {
            parts.push(rest);
        }
        parts.push(target.with(player));
        parts.sort();
        Partition::ALL.into_iter().find(|p| {
            let mut mine: Vec<Coalition> = p.coalitions().iter().map(|c| c.members()).collect();
            mine.sort();
            mine == parts
        })
    }

    /// Every move of `player` that lands in a modelled partition, as
    /// `(target, resulting partition)`.
    pub fn moves(self, player: Player) -> Vec<(Coalition, Partition)> {
        let from = self.coalition_of(player);
        self.coalitions()
            .into_iter()
            .filter(|c| *c != from)
            .map(CoalitionId::members)
            .chain(std::iter::once(Coalition::EMPTY))
            .filter_map(|t| self.after_move(player, t).map(|p| (t, p)))
            .filter(|(_, p)| *p != self)
            .collect()
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b] = self.coalitions();
        write!(f, "{{{a},{b}}}")
    }
}

/// Utility of each player in each coalition it could belong to this slot.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreferenceContext {
    utilities: BTreeMap<(Player, CoalitionId), f64>,
}

impl PreferenceContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, player: Player, coalition: CoalitionId, utility: f64) -> &mut Self {
        self.utilities.insert((player, coalition), utility);
        self
    }

    pub fn get(&self, player: Player, coalition: CoalitionId) -> Result<f64> {
        self.utilities
            .get(&(player, coalition))
            .copied()
            .ok_or_else(|| Error::MissingUtility {
                player: player.to_string(),
                coalition: coalition.to_string(),
            })
    }

    /// The seven entries a slot settlement determines.
    pub fn from_settlement(s: &SlotSettlement) -> Self {
        let mut ctx = Self::new();
        ctx.set(Player::Lp, CoalitionId::LpTirs, s.with_lp.lp)
            .set(Player::Ev, CoalitionId::Ev, s.with_lp.ev)
            .set(Player::Tirs, CoalitionId::LpTirs, s.with_lp.tirs)
            .set(Player::Lp, CoalitionId::Lp, s.with_ev.lp)
            .set(Player::Ev, CoalitionId::EvTirs, s.with_ev.ev)
            .set(Player::Tirs, CoalitionId::EvTirs, s.with_ev.tirs)
            .set(Player::Tirs, CoalitionId::Tirs, s.tirs_alone);
        ctx
    }

    /// Utility `player` receives under `partition`.
    pub fn in_partition(&self, player: Player, partition: Partition) -> Result<f64> {
        self.get(player, partition.coalition_of(player))
    }

    /// Add `shift` to every utility of `player`.
    pub fn shifted(&self, player: Player, shift: f64) -> Self {
        let mut out = self.clone();
        for ((p, _), u) in out.utilities.iter_mut() {
            if *p == player {
                *u += shift;
            }
        }
        out
    }
}

/// `a` is strictly preferred to `b` by `player`, and every other member of
/// `a` is strictly better off with `player` than without.
pub fn prefers(player: Player, a: CoalitionId, b: CoalitionId, ctx: &PreferenceContext) -> Result<bool> {
    if !a.contains(player) || !b.contains(player) {
        return Err(Error::MalformedMove(format!("{player} must belong to both {a} and {b}")));
    }
    if ctx.get(player, a)? <= ctx.get(player, b)? {
        return Ok(false);
    }
    let without = a.members().without(player);
    for k in without.members() {
        if ctx.get(k, a)? <= ctx.get(k, CoalitionId::try_from(without)?)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Switch rule: `player` may leave `from` for `target` when it prefers the
/// enlarged coalition and every member of `target` does too.
pub fn switch_admissible(
    player: Player,
    from: CoalitionId,
    target: Coalition,
    ctx: &PreferenceContext,
) -> Result<bool> {
    if !from.contains(player) {
        return Err(Error::MalformedMove(format!("{player} is not in {from}")));
    }
    if target.contains(player) {
        return Err(Error::MalformedMove(format!("{player} already in {target}")));
    }
    let joined = CoalitionId::try_from(target.with(player))
        .map_err(|_| Error::MalformedMove(format!("{} is not an admissible coalition", target.with(player))))?;
    if !prefers(player, joined, from, ctx)? {
        return Ok(false);
    }
    if target.is_empty() {
        return Ok(true);
    }
    let target_id = CoalitionId::try_from(target)?;
    for k in target.members() {
        if !prefers(k, joined, target_id, ctx)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchOutcome {
    pub partition: Partition,
    /// Moves actually executed.
    pub switches: Vec<(Player, Partition)>,
    /// Passes over the player order, including the final quiet one.
    pub passes: usize,
}

/// Default visiting order.
pub const SWITCH_ORDER: [Player; 3] = [Player::Tirs, Player::Lp, Player::Ev];

/// Apply admissible switches, visiting players in `order`, until a full pass
/// changes nothing.
pub fn run_switch_dynamics(
    ctx: &PreferenceContext,
    start: Partition,
    order: &[Player],
    max_passes: usize,
) -> Result<SwitchOutcome> {
    let mut current = start;
    let mut switches = Vec::new();
    for pass in 1..=max_passes {
        let mut moved = false;
        for &player in order {
            let from = current.coalition_of(player);
            for (target, next) in current.moves(player) {
                if switch_admissible(player, from, target, ctx)? {
                    current = next;
                    switches.push((player, next));
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            return Ok(SwitchOutcome {
                partition: current,
                switches,
                passes: pass,
            });
        }
    }
    Err(Error::NonConvergence(max_passes))
}

/// No player can gain by a move the receiving coalition would accept.
pub fn is_stable(partition: Partition, ctx: &PreferenceContext) -> Result<bool> {
    for player in Player::ALL {
        let here = ctx.in_partition(player, partition)?;
        for (target, _) in partition.moves(player) {
            let joined = CoalitionId::try_from(target.with(player))?;
            let there = ctx.get(player, joined)?;
            let alone = ctx.get(player, CoalitionId::singleton(player))?;
            let mut welcome = true;
            if !target.is_empty() {
                let target_id = CoalitionId::try_from(target)?;
                for k in target.members() {
                    welcome &= ctx.get(k, joined)? > ctx.get(k, target_id)?;
                }
                welcome &= there > alone;
            }
            if welcome && there > here {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// One slot of an online run, as needed for the equilibrium check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotTrace {
    pub played: Partition,
    pub context: PreferenceContext,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeReport {
    /// `max(0, time-averaged best unilateral gain)`, indexed by [`Player::index`].
    pub gains: [f64; 3],
}

impl NeReport {
    pub fn max_gain(&self) -> f64 {
        self.gains.iter().copied().fold(0.0, f64::max)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.max_gain() <= tol
    }
}

/// Time-averaged gain each player could have obtained by its best accepted
/// unilateral move in every slot.
pub fn check_ne_trace(trace: &[SlotTrace]) -> Result<NeReport> {
    if trace.is_empty() {
        return Err(Error::Empty);
    }
    let mut gains = [0.0; 3];
    for slot in trace {
        for player in Player::ALL {
            let here = slot.context.in_partition(player, slot.played)?;
            let mut best = here;
            for (target, _) in slot.played.moves(player) {
                let joined = CoalitionId::try_from(target.with(player))?;
                let mut accepted = true;
                if !target.is_empty() {
                    let target_id = CoalitionId::try_from(target)?;
                    for k in target.members() {
                        accepted &= prefers(k, joined, target_id, &slot.context)?;
                    }
                }
                if accepted {
                    best = best.max(slot.context.get(player, joined)?);
                }
            }
            gains[player.index()] += best - here;
        }
    }
    let n = trace.len() as f64;
    Ok(NeReport {
        gains: gains.map(|g| (g / n).max(0.0)),
    })
}
