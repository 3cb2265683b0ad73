//! Individual utilities, coalition values, Shapley values and TIRS payments.
//!
//! Payments use the Shapley value of the TIRS inside the two-member
//! coalition `{i, R}`:
//!
//! ```text
//! mu_i = (U^{i,R} + U^{R} - U^{i}) / 2
//! ```
//!
//! `U^{i,R}` is the coalition value when the TIRS serves `i`, `U^{i}` is the
//! value `i` obtains on its own in the same slot (the TIRS then serves the
//! opponent), and `U^{R} = -rho E^R`. The result is clamped into
//! `[0, sum R^sec]`; the unclamped value is kept alongside.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::RateReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    /// The legitimate pairs (LT plus all LRs).
    Lp,
    /// The proactive eavesdropper.
    Ev,
    /// The third-party surfaces, acting as one player.
    Tirs,
}

impl Player {
    pub const ALL: [Player; 3] = [Player::Lp, Player::Ev, Player::Tirs];

    pub fn index(self) -> usize {
        match self {
            Player::Lp => 0,
            Player::Ev => 1,
            Player::Tirs => 2,
        }
    }

    fn bit(self) -> u8 {
        1 << self.index()
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Player::Lp => "L",
            Player::Ev => "E",
            Player::Tirs => "R",
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Arbitrary subset of the three players.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition(u8);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn of(players: &[Player]) -> Self {
        Coalition(players.iter().fold(0, |m, p| m | p.bit()))
    }

    pub fn contains(self, p: Player) -> bool {
        self.0 & p.bit() != 0
    }

    pub fn with(self, p: Player) -> Self {
        Coalition(self.0 | p.bit())
    }

    pub fn without(self, p: Player) -> Self {
        Coalition(self.0 & !p.bit())
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn members(self) -> impl Iterator<Item = Player> {
        Player::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Every subset of `self`, including the empty set and `self`.
    pub fn subsets(self) -> impl Iterator<Item = Coalition> {
        let full = self.0;
        (0..=full).filter(move |m| m & !full == 0).map(Coalition)
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.members().map(Player::symbol).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// The coalitions that may form: `{L}`, `{E}`, `{L,R}`, `{E,R}`, plus the
/// singleton `{R}` needed by the payment rule. LP and EV never share one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoalitionId {
    Lp,
    Ev,
    Tirs,
    LpTirs,
    EvTirs,
}

impl CoalitionId {
    pub const ALL: [CoalitionId; 5] = [
        CoalitionId::Lp,
        CoalitionId::Ev,
        CoalitionId::Tirs,
        CoalitionId::LpTirs,
        CoalitionId::EvTirs,
    ];

    pub fn members(self) -> Coalition {
        match self {
            CoalitionId::Lp => Coalition::of(&[Player::Lp]),
            CoalitionId::Ev => Coalition::of(&[Player::Ev]),
            CoalitionId::Tirs => Coalition::of(&[Player::Tirs]),
            CoalitionId::LpTirs => Coalition::of(&[Player::Lp, Player::Tirs]),
            CoalitionId::EvTirs => Coalition::of(&[Player::Ev, Player::Tirs]),
        }
    }

    pub fn contains(self, p: Player) -> bool {
        self.members().contains(p)
    }

    pub fn singleton(p: Player) -> Self {
        match p {
            Player::Lp => CoalitionId::Lp,
            Player::Ev => CoalitionId::Ev,
            Player::Tirs => CoalitionId::Tirs,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CoalitionId::Lp => "L",
            CoalitionId::Ev => "E",
            CoalitionId::Tirs => "R",
            CoalitionId::LpTirs => "LR",
            CoalitionId::EvTirs => "ER",
        }
    }
}

impl TryFrom<Coalition> for CoalitionId {
    type Error = Error;
    fn try_from(c: Coalition) -> Result<Self> {
        CoalitionId::ALL
            .into_iter()
            .find(|id| id.members() == c)
            .ok_or_else(|| Error::InvalidCoalition(c.to_string()))
    }
}

impl fmt::Display for CoalitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.members().fmt(f)
    }
}

/// Power consumption of each party in one slot, watts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    pub lp: f64,
    pub ev: f64,
    pub tirs: f64,
}

impl Energies {
    fn of(&self, p: Player) -> f64 {
        match p {
            Player::Lp => self.lp,
            Player::Ev => self.ev,
            Player::Tirs => self.tirs,
        }
    }
}

/// Coalition value: `+sum R^sec` for the LP side, `-sum R^sec` for the EV
/// side, minus `rho` times every member's power. `{R}` alone pays only its
/// own power.
pub fn coalition_value(s: CoalitionId, secrecy_sum: f64, energies: &Energies, rho: f64) -> f64 {
    let cost: f64 = s.members().members().map(|p| rho * energies.of(p)).sum();
    match s {
        CoalitionId::Lp | CoalitionId::LpTirs => secrecy_sum - cost,
        CoalitionId::Ev | CoalitionId::EvTirs => -secrecy_sum - cost,
        CoalitionId::Tirs => -cost,
    }
}

/// Like [`coalition_value`] for an arbitrary player set; the empty set is
/// worth zero and sets outside the admissible family are rejected.
pub fn coalition_value_of(s: Coalition, secrecy_sum: f64, energies: &Energies, rho: f64) -> Result<f64> {
    if s.is_empty() {
        return Ok(0.0);
    }
    Ok(coalition_value(CoalitionId::try_from(s)?, secrecy_sum, energies, rho))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shapley value of `player` in `coalition` by the subset formula
/// `sum_{s subset S\i} |s|! (|S|-|s|-1)! / |S|! (v(s+i) - v(s))`.
///
/// # Panics
/// If `player` is not a member of `coalition`.
pub fn shapley(player: Player, coalition: Coalition, value: impl Fn(Coalition) -> f64) -> f64 {
    assert!(coalition.contains(player), "{player} is not in {coalition}");
    let n = coalition.len();
    let total = factorial(n);
    coalition
        .without(player)
        .subsets()
        .map(|s| {
            let weight = factorial(s.len()) * factorial(n - s.len() - 1) / total;
            weight * (value(s.with(player)) - value(s))
        })
        .sum()
}

/// The three coalition values entering a TIRS payment to `i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaymentBasis {
    /// `U^{i,R}`
    pub with_tirs: f64,
    /// `U^{R}`
    pub tirs_alone: f64,
    /// `U^{i}`
    pub without_tirs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Payment {
    /// Shapley value before clamping.
    pub raw: f64,
    /// Value actually paid, in `[0, sum R^sec]`.
    pub paid: f64,
}

/// `mu = (U^{i,R} + U^{R} - U^{i}) / 2`, clamped into `[0, secrecy_sum]`.
pub fn payment_mu(basis: &PaymentBasis, secrecy_sum: f64) -> Payment {
    let raw = (basis.with_tirs + basis.tirs_alone - basis.without_tirs) / 2.0;
    Payment {
        raw,
        paid: raw.clamp(0.0, secrecy_sum.max(0.0)),
    }
}

/// Coalition indicators and the history the TIRS utility depends on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EconState {
    c1: u8,
    c2: u8,
    /// `c_1(t-1)`; `None` in the first slot, where no switch is possible.
    pub prev_c1: Option<u8>,
    /// `U^R(t-1)`
    pub prev_tirs_utility: f64,
    /// `C_conf`
    pub conflict_cost: f64,
    /// `eta`
    pub penalty_weight: f64,
}

impl EconState {
    pub fn new(
        c1: u8,
        c2: u8,
        prev_c1: Option<u8>,
        prev_tirs_utility: f64,
        conflict_cost: f64,
        penalty_weight: f64,
    ) -> Result<Self> {
        if c1 > 1 || c2 > 1 || c1 + c2 != 1 || prev_c1.is_some_and(|p| p > 1) {
            return Err(Error::CoalitionIndicator { c1, c2 });
        }
        if !(conflict_cost >= 0.0) || !(penalty_weight >= 0.0) {
            return Err(Error::InvalidParameter(
                "conflict cost and penalty weight must be >= 0".into(),
            ));
        }
        Ok(EconState {
            c1,
            c2,
            prev_c1,
            prev_tirs_utility,
            conflict_cost,
            penalty_weight,
        })
    }

    pub fn c1(&self) -> u8 {
        self.c1
    }

    pub fn c2(&self) -> u8 {
        self.c2
    }

    /// `F(t) = c_1(t) XOR c_1(t-1)`.
    pub fn switched(&self) -> bool {
        self.prev_c1.is_some_and(|p| p != self.c1)
    }

    /// `C_conf F(t) U^R(t-1)`; negative when the previous utility was negative.
    pub fn punishment(&self) -> f64 {
        if self.switched() {
            self.conflict_cost * self.prev_tirs_utility
        } else {
            0.0
        }
    }
}

/// `U^L = sum R^sec - c1 mu_L - rho (E^L + c1 E^R)`.
pub fn utility_lp(secrecy_sum: f64, energies: &Energies, econ: &EconState, mu_lp: f64, rho: f64) -> f64 {
    let c1 = f64::from(econ.c1);
    secrecy_sum - c1 * mu_lp - rho * (energies.lp + c1 * energies.tirs)
}

/// `U^E = -sum R^sec - c2 mu_E - rho (E^E + c2 E^R)`.
pub fn utility_ev(secrecy_sum: f64, energies: &Energies, econ: &EconState, mu_ev: f64, rho: f64) -> f64 {
    let c2 = f64::from(econ.c2);
    -secrecy_sum - c2 * mu_ev - rho * (energies.ev + c2 * energies.tirs)
}

/// `U^R = c1 mu_L + c2 mu_E - C_conf F(t) U^R(t-1)`.
pub fn utility_tirs(econ: &EconState, mu_lp: f64, mu_ev: f64) -> f64 {
    f64::from(econ.c1) * mu_lp + f64::from(econ.c2) * mu_ev - econ.punishment()
}

/// TIRS utility when it sits in no coalition (`c1 = c2 = 0`).
pub fn utility_tirs_alone(prev_c1: Option<u8>, prev_tirs_utility: f64, conflict_cost: f64) -> f64 {
    // F(t) = 0 XOR c1(t-1)
    if prev_c1 == Some(1) {
        -conflict_cost * prev_tirs_utility
    } else {
        0.0
    }
}

/// Everything one partition yields in one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    /// 1 when the TIRS serves the LP.
    pub c1: u8,
    pub lp: f64,
    pub ev: f64,
    pub tirs: f64,
    /// Payment the LP would owe the TIRS (charged only when `c1 = 1`).
    pub mu_lp: Payment,
    /// Payment the EV would owe the TIRS (charged only when `c1 = 0`).
    pub mu_ev: Payment,
    /// Value of the coalition containing the LP.
    pub value_lp_side: f64,
    /// Value of the coalition containing the EV.
    pub value_ev_side: f64,
    pub secrecy: Vec<f64>,
    pub secrecy_sum: f64,
    pub punishment: f64,
    pub energies: Energies,
}

impl UtilityReport {
    pub fn of(&self, p: Player) -> f64 {
        match p {
            Player::Lp => self.lp,
            Player::Ev => self.ev,
            Player::Tirs => self.tirs,
        }
    }

    /// The payment actually made this slot.
    pub fn active_payment(&self) -> Payment {
        if self.c1 == 1 {
            self.mu_lp
        } else {
            self.mu_ev
        }
    }
}

/// Rates and power of one partition's evaluation.
#[derive(Clone, Copy, Debug)]
pub struct PartitionEconomics<'a> {
    pub rates: &'a RateReport,
    pub energies: Energies,
}

/// TIRS history carried from slot to slot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EconHistory {
    pub prev_c1: Option<u8>,
    pub prev_tirs_utility: f64,
}

impl EconHistory {
    pub fn advance(&self, played: &UtilityReport) -> EconHistory {
        EconHistory {
            prev_c1: Some(played.c1),
            prev_tirs_utility: played.tirs,
        }
    }
}

/// Utilities of both partitions evaluated on the same slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotSettlement {
    /// TIRS serving the LP (`c1 = 1`).
    pub with_lp: UtilityReport,
    /// TIRS serving the EV (`c1 = 0`).
    pub with_ev: UtilityReport,
    /// `U^R` of a TIRS joining neither side.
    pub tirs_alone: f64,
}

impl SlotSettlement {
    pub fn report(&self, c1: u8) -> &UtilityReport {
        if c1 == 1 {
            &self.with_lp
        } else {
            &self.with_ev
        }
    }
}

/// Payments and utilities for both partitions of a slot. Each payment's
/// stand-alone value `U^{i}` comes from the partition where the TIRS serves
/// the opponent.
pub fn settle(
    with_lp: PartitionEconomics<'_>,
    with_ev: PartitionEconomics<'_>,
    history: &EconHistory,
    conflict_cost: f64,
    penalty_weight: f64,
    rho: f64,
) -> Result<SlotSettlement> {
    let sum_a = with_lp.rates.secrecy_sum();
    let sum_b = with_ev.rates.secrecy_sum();
    let (ea, eb) = (with_lp.energies, with_ev.energies);

    let mu_lp = payment_mu(
        &PaymentBasis {
            with_tirs: coalition_value(CoalitionId::LpTirs, sum_a, &ea, rho),
            tirs_alone: coalition_value(CoalitionId::Tirs, sum_a, &ea, rho),
            without_tirs: coalition_value(CoalitionId::Lp, sum_b, &eb, rho),
        },
        sum_a,
    );
    let mu_ev = payment_mu(
        &PaymentBasis {
            with_tirs: coalition_value(CoalitionId::EvTirs, sum_b, &eb, rho),
            tirs_alone: coalition_value(CoalitionId::Tirs, sum_b, &eb, rho),
            without_tirs: coalition_value(CoalitionId::Ev, sum_a, &ea, rho),
        },
        sum_b,
    );

    let build = |c1: u8, part: &PartitionEconomics<'_>| -> Result<UtilityReport> {
        let econ = EconState::new(
            c1,
            1 - c1,
            history.prev_c1,
            history.prev_tirs_utility,
            conflict_cost,
            penalty_weight,
        )?;
        let sum = part.rates.secrecy_sum();
        let e = part.energies;
        let (lp_side, ev_side) = if c1 == 1 {
            (CoalitionId::LpTirs, CoalitionId::Ev)
        } else {
            (CoalitionId::Lp, CoalitionId::EvTirs)
        };
        Ok(UtilityReport {
            c1,
            lp: utility_lp(sum, &e, &econ, mu_lp.paid, rho),
            ev: utility_ev(sum, &e, &econ, mu_ev.paid, rho),
            tirs: utility_tirs(&econ, mu_lp.paid, mu_ev.paid),
            mu_lp,
            mu_ev,
            value_lp_side: coalition_value(lp_side, sum, &e, rho),
            value_ev_side: coalition_value(ev_side, sum, &e, rho),
            secrecy: part.rates.secrecy.clone(),
            secrecy_sum: sum,
            punishment: econ.punishment(),
            energies: e,
        })
    };

    Ok(SlotSettlement {
        with_lp: build(1, &with_lp)?,
        with_ev: build(0, &with_ev)?,
        tirs_alone: utility_tirs_alone(history.prev_c1, history.prev_tirs_utility, conflict_cost),
    })
}
