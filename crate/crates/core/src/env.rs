//! Per-coalition MDPs stepped in lockstep on a shared channel.
//!
//! All four agent coalitions (`{L,R}`, `{E}` for one partition and `{L}`,
//! `{E,R}` for the other) act on the same realization every slot, so the
//! payment of each partition can use the stand-alone value observed in the
//! other.
//!
//! State layout, fixed per coalition:
//!
//! ```text
//! [re, im] of every channel entry (ChannelRealization::entries order),
//!          divided by that link's large-scale amplitude
//! R^L_i for every LR      (LP in coalition only)
//! R^E_i for every LR      (EV in coalition only)
//! R^sec_i for every LR
//! ```
//!
//! Rates are the previous evaluation's, multiplied by `rate_scale`; zeros
//! after a reset.
//!
//! Raw action layout: LP side `[re, im]` of `w_1 .. w_L`, EV side `[re, im]`
//! of `f_1 .. f_L`, followed by `K*N` phases when the TIRS is a member.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{composite_channels, ChannelProcess, ChannelRealization, FadingParams, NodeGeometry};
use crate::econ::{settle, CoalitionId, EconHistory, Energies, PartitionEconomics, Player, SlotSettlement};
use crate::error::{Error, Result};
use crate::game::Partition;
use crate::numerics::{CVector, C64};
use crate::phy::{energy_ev, energy_lp, energy_tirs, evaluate, ActionProfile, PowerParams, RateReport, Violation};

/// The coalitions that own an agent.
pub const AGENT_COALITIONS: [CoalitionId; 4] =
    [CoalitionId::LpTirs, CoalitionId::Ev, CoalitionId::Lp, CoalitionId::EvTirs];

/// System sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// `L`
    pub receivers: usize,
    /// `M_a`
    pub tx_antennas: usize,
    /// `M_e`
    pub ev_antennas: usize,
    /// `K`
    pub surfaces: usize,
    /// `N`
    pub elements: usize,
}

impl Dims {
    pub fn of(geom: &NodeGeometry) -> Self {
        Dims {
            receivers: geom.num_receivers(),
            tx_antennas: geom.tx_antennas,
            ev_antennas: geom.ev_antennas,
            surfaces: geom.num_surfaces(),
            elements: geom.surface_elements,
        }
    }

    /// Complex channel entries per slot:
    /// `K N M_a + L M_a + M_a + K L N + K N + L M_e`.
    pub fn channel_entries(&self) -> usize {
        let Dims { receivers: l, tx_antennas: ma, ev_antennas: me, surfaces: k, elements: n } = *self;
        k * n * ma + l * ma + ma + k * l * n + k * n + l * me
    }

    pub fn state_dim(&self, c: CoalitionId) -> usize {
        let rate_blocks = 1 + usize::from(c.contains(Player::Lp)) + usize::from(c.contains(Player::Ev));
        2 * self.channel_entries() + rate_blocks * self.receivers
    }

    pub fn action_dim(&self, c: CoalitionId) -> usize {
        let mut d = 0;
        if c.contains(Player::Lp) {
            d += 2 * self.receivers * self.tx_antennas;
        }
        if c.contains(Player::Ev) {
            d += 2 * self.receivers * self.ev_antennas;
        }
        if c.contains(Player::Tirs) {
            d += self.surfaces * self.elements;
        }
        d
    }
}

/// Knobs of the MDP itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// `eta`, reward penalty per LR below `R^sec_min`.
    pub penalty_weight: f64,
    /// `C_conf`
    pub conflict_cost: f64,
    /// Multiplier applied to rates before they enter a state.
    pub rate_scale: f64,
    /// Hide the legitimate links from EV-side states.
    pub mask_ev_observation: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            penalty_weight: 2.0,
            conflict_cost: 0.1,
            rate_scale: 0.1,
            mask_ev_observation: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub coalition: CoalitionId,
    pub slot: u64,
    pub values: Vec<f64>,
}

/// The part of an action profile one coalition controls.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionFragment {
    pub beams: Option<Vec<CVector>>,
    pub jammers: Option<Vec<CVector>>,
    pub phases: Option<Vec<Vec<f64>>>,
}

fn take_complex(raw: &[f64], at: &mut usize, len: usize) -> CVector {
    let v = (0..len)
        .map(|m| C64::new(raw[*at + 2 * m], raw[*at + 2 * m + 1]))
        .collect();
    *at += 2 * len;
    CVector::new(v).expect("non-empty block")
}

fn wrap_phase(p: f64) -> f64 {
    if (0.0..=TAU).contains(&p) {
        p
    } else {
        p.rem_euclid(TAU)
    }
}

/// Reshape a raw policy output into complex beams and phases, then project:
/// each beam radially onto `||w_i||^2 <= P^L_max`, all jammers jointly onto
/// `sum ||f_i||^2 <= P^E_max`, phases wrapped into `[0, 2pi]`.
pub fn decode_and_project(raw: &[f64], coalition: CoalitionId, dims: &Dims, pp: &PowerParams) -> Result<ActionFragment> {
    let expected = dims.action_dim(coalition);
    if raw.len() != expected {
        return Err(Error::DimensionMismatch {
            context: "raw action",
            expected,
            actual: raw.len(),
        });
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("raw action"));
    }
    let mut at = 0;
    let mut frag = ActionFragment::default();
    if coalition.contains(Player::Lp) {
        let beams = (0..dims.receivers)
            .map(|_| {
                let w = take_complex(raw, &mut at, dims.tx_antennas);
                let p = w.norm_sq();
                if p > pp.max_beam_power {
                    w.scale_real((pp.max_beam_power / p).sqrt())
                } else {
                    w
                }
            })
            .collect();
        frag.beams = Some(beams);
    }
    if coalition.contains(Player::Ev) {
        let jammers: Vec<CVector> = (0..dims.receivers)
            .map(|_| take_complex(raw, &mut at, dims.ev_antennas))
            .collect();
        let total: f64 = jammers.iter().map(CVector::norm_sq).sum();
        let jammers = if total > pp.max_jamming_power {
            let s = (pp.max_jamming_power / total).sqrt();
            jammers.iter().map(|f| f.scale_real(s)).collect()
        } else {
            jammers
        };
        frag.jammers = Some(jammers);
    }
    if coalition.contains(Player::Tirs) {
        let phases = (0..dims.surfaces)
            .map(|k| {
                let start = at + k * dims.elements;
                raw[start..start + dims.elements].iter().map(|&p| wrap_phase(p)).collect()
            })
            .collect();
        at += dims.surfaces * dims.elements;
        frag.phases = Some(phases);
    }
    debug_assert_eq!(at, expected);
    Ok(frag)
}

/// Inverse of the reshape in [`decode_and_project`] (no projection).
pub fn encode_fragment(frag: &ActionFragment) -> Vec<f64> {
    let mut out = Vec::new();
    for block in [&frag.beams, &frag.jammers].into_iter().flatten() {
        for v in block {
            for z in v.iter() {
                out.push(z.re);
                out.push(z.im);
            }
        }
    }
    if let Some(ph) = &frag.phases {
        out.extend(ph.iter().flatten());
    }
    out
}

/// Join the fragments of a partition's two coalitions.
pub fn merge_fragments(partition: Partition, frags: &[(CoalitionId, &ActionFragment)]) -> Result<ActionProfile> {
    let [a, b] = partition.coalitions();
    let find = |c: CoalitionId| {
        frags
            .iter()
            .find(|(id, _)| *id == c)
            .map(|(_, f)| *f)
            .ok_or_else(|| Error::MissingFragment(c.to_string()))
    };
    let (fa, fb) = (find(a)?, find(b)?);
    fn pick<T: Clone>(x: &Option<T>, y: &Option<T>, what: &str, partition: Partition) -> Result<T> {
        x.clone()
            .or_else(|| y.clone())
            .ok_or_else(|| Error::MissingFragment(format!("{what} in {partition}")))
    }
    Ok(ActionProfile {
        beams: pick(&fa.beams, &fb.beams, "beams", partition)?,
        jammers: pick(&fa.jammers, &fb.jammers, "jammers", partition)?,
        phases: pick(&fa.phases, &fb.phases, "phases", partition)?,
    })
}

/// Counters over every action profile that reached the PHY.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintAudit {
    pub profiles: u64,
    pub beam_power: u64,
    pub jamming_power: u64,
    pub phase_range: u64,
    pub unit_modulus: u64,
    pub payments: u64,
    pub payment_out_of_range: u64,
}

impl ConstraintAudit {
    pub fn violations(&self) -> u64 {
        self.beam_power + self.jamming_power + self.phase_range + self.unit_modulus + self.payment_out_of_range
    }

    /// Add another audit's counts.
    pub fn absorb(&mut self, other: &ConstraintAudit) {
        self.profiles += other.profiles;
        self.beam_power += other.beam_power;
        self.jamming_power += other.jamming_power;
        self.phase_range += other.phase_range;
        self.unit_modulus += other.unit_modulus;
        self.payments += other.payments;
        self.payment_out_of_range += other.payment_out_of_range;
    }

    fn record(&mut self, actions: &ActionProfile, pp: &PowerParams) {
        self.profiles += 1;
        for v in actions.violations(pp) {
            match v {
                Violation::BeamPower => self.beam_power += 1,
                Violation::JammingPower => self.jamming_power += 1,
                Violation::PhaseRange => self.phase_range += 1,
            }
        }
        if actions
            .phases
            .iter()
            .flatten()
            .any(|&p| (C64::from_polar(1.0, p).norm() - 1.0).abs() > 1e-12)
        {
            self.unit_modulus += 1;
        }
    }

    fn record_payments(&mut self, s: &SlotSettlement) {
        for r in [&s.with_lp, &s.with_ev] {
            for (mu, cap) in [(r.mu_lp.paid, s.with_lp.secrecy_sum), (r.mu_ev.paid, s.with_ev.secrecy_sum)] {
                self.payments += 1;
                if !(0.0..=cap).contains(&mu) {
                    self.payment_out_of_range += 1;
                }
            }
        }
    }
}

/// One coalition's view of an evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub coalition: CoalitionId,
    /// Coalition value minus the secrecy penalty.
    pub reward: f64,
    pub value: f64,
    /// LRs below `R^sec_min`, counted only for LP-side coalitions.
    pub penalized: usize,
    pub next_state: EnvState,
}

/// Both partitions evaluated on one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointOutcome {
    pub slot: u64,
    pub channel_digest: String,
    pub profiles: [ActionProfile; 2],
    pub rates: [RateReport; 2],
    pub settlement: SlotSettlement,
    /// In [`AGENT_COALITIONS`] order.
    pub outcomes: Vec<StepOutcome>,
}

impl JointOutcome {
    pub fn outcome(&self, c: CoalitionId) -> &StepOutcome {
        self.outcomes.iter().find(|o| o.coalition == c).expect("agent coalition")
    }
}

fn partition_index(p: Partition) -> usize {
    match p {
        Partition::TirsWithLp => 0,
        Partition::TirsWithEv => 1,
    }
}

fn partition_of(c: CoalitionId) -> Partition {
    match c {
        CoalitionId::LpTirs | CoalitionId::Ev => Partition::TirsWithLp,
        _ => Partition::TirsWithEv,
    }
}

/// Reward of coalition `c` given its value and the partition's secrecy rates.
pub fn coalition_reward(c: CoalitionId, value: f64, secrecy: &[f64], min_rate: f64, eta: f64) -> (f64, usize) {
    if !c.contains(Player::Lp) {
        return (value, 0);
    }
    let v = secrecy.iter().filter(|&&r| r < min_rate).count();
    (value - eta * v as f64, v)
}

#[derive(Clone, Debug)]
pub struct GameEnv {
    dims: Dims,
    pp: PowerParams,
    cfg: EnvConfig,
    process: ChannelProcess,
    entry_scale: Vec<f64>,
    realization: ChannelRealization,
    last_rates: [RateReport; 2],
    audit: ConstraintAudit,
}

impl GameEnv {
    /// Builds the environment and draws the first realization from `rng`.
    pub fn new<R: Rng + ?Sized>(
        geom: &NodeGeometry,
        fading: &FadingParams,
        pp: PowerParams,
        cfg: EnvConfig,
        rng: &mut R,
    ) -> Result<Self> {
        pp.validate()?;
        let mut process = ChannelProcess::new(geom, fading)?;
        let entry_scale = process.model().entry_gains().iter().map(|g| 1.0 / g).collect();
        let realization = process.next(rng);
        let dims = Dims::of(geom);
        Ok(GameEnv {
            dims,
            pp,
            cfg,
            process,
            entry_scale,
            realization,
            last_rates: [RateReport::zeros(dims.receivers), RateReport::zeros(dims.receivers)],
            audit: ConstraintAudit::default(),
        })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn power(&self) -> &PowerParams {
        &self.pp
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn realization(&self) -> &ChannelRealization {
        &self.realization
    }

    pub fn audit(&self) -> &ConstraintAudit {
        &self.audit
    }

    /// Start a new episode: fresh channel chain and zero rates in the state.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.process.restart();
        self.realization = self.process.next(rng);
        self.last_rates = [RateReport::zeros(self.dims.receivers), RateReport::zeros(self.dims.receivers)];
    }

    /// Draw the next slot's channels; rates in the state carry over.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.realization = self.process.next(rng);
    }

    pub fn observe(&self, c: CoalitionId) -> EnvState {
        let rates = &self.last_rates[partition_index(partition_of(c))];
        assemble_state(&self.realization, rates, c, &self.entry_scale, &self.cfg)
    }

    /// Evaluate both partitions on the current realization. Rates in the
    /// returned states (and later observations) are the new ones.
    pub fn evaluate(&mut self, frags: &[(CoalitionId, &ActionFragment)], history: &EconHistory) -> Result<JointOutcome> {
        let rho = self.pp.unit_power_cost;
        let e_tirs = energy_tirs(self.dims.surfaces, self.dims.elements, self.pp.element_power);
        let mut profiles = Vec::with_capacity(2);
        let mut rates = Vec::with_capacity(2);
        let mut energies = Vec::with_capacity(2);
        for p in Partition::ALL {
            let actions = merge_fragments(p, frags)?;
            self.audit.record(&actions, &self.pp);
            let ch = composite_channels(&self.realization, &actions.phases)?;
            rates.push(evaluate(&ch, &actions, &self.pp)?);
            energies.push(Energies {
                lp: energy_lp(&actions, &self.pp),
                ev: energy_ev(&actions, &self.pp),
                tirs: e_tirs,
            });
            profiles.push(actions);
        }
        let settlement = settle(
            PartitionEconomics { rates: &rates[0], energies: energies[0] },
            PartitionEconomics { rates: &rates[1], energies: energies[1] },
            history,
            self.cfg.conflict_cost,
            self.cfg.penalty_weight,
            rho,
        )?;
        self.audit.record_payments(&settlement);
        self.last_rates = [rates[0].clone(), rates[1].clone()];

        let outcomes = AGENT_COALITIONS
            .iter()
            .map(|&c| {
                let report = settlement.report(partition_of(c).c1());
                let value = if c.contains(Player::Lp) { report.value_lp_side } else { report.value_ev_side };
                let (reward, penalized) =
                    coalition_reward(c, value, &report.secrecy, self.pp.min_secrecy_rate, self.cfg.penalty_weight);
                StepOutcome {
                    coalition: c,
                    reward,
                    value,
                    penalized,
                    next_state: self.observe(c),
                }
            })
            .collect();
        let [p0, p1]: [ActionProfile; 2] = profiles.try_into().expect("two partitions");
        let [r0, r1]: [RateReport; 2] = rates.try_into().expect("two partitions");
        Ok(JointOutcome {
            slot: self.realization.slot,
            channel_digest: self.realization.digest(),
            profiles: [p0, p1],
            rates: [r0, r1],
            settlement,
            outcomes,
        })
    }

    /// Evaluate, then move to the next slot. Returned states describe the
    /// new slot's channels with the rates just achieved.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        frags: &[(CoalitionId, &ActionFragment)],
        history: &EconHistory,
        rng: &mut R,
    ) -> Result<JointOutcome> {
        let mut out = self.evaluate(frags, history)?;
        self.advance(rng);
        for o in &mut out.outcomes {
            o.next_state = self.observe(o.coalition);
        }
        Ok(out)
    }
}

/// Flatten channels and the coalition's visible rates into a state vector.
pub fn assemble_state(
    re: &ChannelRealization,
    rates: &RateReport,
    c: CoalitionId,
    entry_scale: &[f64],
    cfg: &EnvConfig,
) -> EnvState {
    let mut values = Vec::with_capacity(2 * entry_scale.len() + 3 * rates.receivers());
    let mask = cfg.mask_ev_observation && c.contains(Player::Ev);
    let hidden = if mask { legitimate_entry_ranges(re) } else { Vec::new() };
    for (idx, (z, s)) in re.entries().zip(entry_scale).enumerate() {
        if hidden.iter().any(|r| r.contains(&idx)) {
            values.extend([0.0, 0.0]);
        } else {
            values.extend([z.re * s, z.im * s]);
        }
    }
    let scale = cfg.rate_scale;
    if c.contains(Player::Lp) {
        values.extend(rates.rate_lr.iter().map(|r| r * scale));
    }
    if c.contains(Player::Ev) {
        values.extend(rates.rate_ev.iter().map(|r| r * scale));
    }
    values.extend(rates.secrecy.iter().map(|r| r * scale));
    EnvState {
        coalition: c,
        slot: re.slot,
        values,
    }
}

/// Entry index ranges of LT-LR and surface-LR links.
fn legitimate_entry_ranges(re: &ChannelRealization) -> Vec<std::ops::Range<usize>> {
    let (k, l, n, ma) = (re.num_surfaces(), re.num_receivers(), re.surface_elements(), re.tx_antennas());
    let tx_lr_start = k * n * ma;
    let tx_lr_end = tx_lr_start + l * ma;
    let surface_lr_start = tx_lr_end + ma;
    vec![tx_lr_start..tx_lr_end, surface_lr_start..surface_lr_start + k * l * n]
}
