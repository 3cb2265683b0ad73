//! SINRs, achievable rates, secrecy rates and power consumption.

use serde::{Deserialize, Serialize};

use crate::channel::CompositeChannels;
use crate::error::{Error, Result};
use crate::numerics::{norm_sq, CVector};

/// Beamformers, jamming beamformers and surface phase shifts for one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionProfile {
    /// `w_i`, one per receiver, length `M_a`, units sqrt(W).
    pub beams: Vec<CVector>,
    /// `f_i`, one per receiver, length `M_e`, units sqrt(W).
    pub jammers: Vec<CVector>,
    /// `theta_{k,n}` in radians, one list per surface.
    pub phases: Vec<Vec<f64>>,
}

/// Which constraint family an action profile breaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Violation {
    BeamPower,
    JammingPower,
    PhaseRange,
}

impl ActionProfile {
    pub fn zeros(receivers: usize, tx_antennas: usize, ev_antennas: usize, surfaces: usize, elements: usize) -> Self {
        ActionProfile {
            beams: vec![CVector::zeros(tx_antennas); receivers],
            jammers: vec![CVector::zeros(ev_antennas); receivers],
            phases: vec![vec![0.0; elements]; surfaces],
        }
    }

    pub fn num_streams(&self) -> usize {
        self.beams.len()
    }

    pub fn beam_power(&self) -> f64 {
        self.beams.iter().map(norm_sq).sum()
    }

    pub fn jamming_power(&self) -> f64 {
        self.jammers.iter().map(norm_sq).sum()
    }

    /// Per-stream power cap, total jamming cap and phase range, with a
    /// relative slack of 1e-12 for rescaling round-off.
    pub fn violations(&self, pp: &PowerParams) -> Vec<Violation> {
        let slack = 1.0 + 1e-12;
        let mut out = Vec::new();
        if self.beams.iter().any(|w| norm_sq(w) > pp.max_beam_power * slack) {
            out.push(Violation::BeamPower);
        }
        if self.jamming_power() > pp.max_jamming_power * slack {
            out.push(Violation::JammingPower);
        }
        if self
            .phases
            .iter()
            .flatten()
            .any(|p| !(0.0..=std::f64::consts::TAU).contains(p))
        {
            out.push(Violation::PhaseRange);
        }
        out
    }

    pub fn is_feasible(&self, pp: &PowerParams) -> bool {
        self.violations(pp).is_empty()
    }
}

/// Power, noise and cost parameters in linear units (watts).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    /// `rho`, utility per watt.
    pub unit_power_cost: f64,
    /// `xi^L`
    pub tx_amplifier: f64,
    /// `xi^E`
    pub ev_amplifier: f64,
    /// `P_B`
    pub tx_circuit: f64,
    /// `P_i`, per stream.
    pub stream_circuit: f64,
    /// `P^R`, per surface element.
    pub element_power: f64,
    /// `P^E`
    pub ev_circuit: f64,
    /// `N_0`
    pub noise: f64,
    /// `N_1`, residual self-interference at the EV.
    pub residual_si: f64,
    /// `P^L_max`, per stream.
    pub max_beam_power: f64,
    /// `P^E_max`, total.
    pub max_jamming_power: f64,
    /// `R^sec_min`, bits/s/Hz.
    pub min_secrecy_rate: f64,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl Default for PowerParams {
    fn default() -> Self {
        PowerParams {
            unit_power_cost: 0.001,
            tx_amplifier: 0.01,
            ev_amplifier: 0.1,
            tx_circuit: 0.2,
            stream_circuit: 0.01,
            element_power: 0.001,
            ev_circuit: 0.1,
            noise: dbm_to_watts(-174.0),
            residual_si: dbm_to_watts(-174.0),
            max_beam_power: dbm_to_watts(40.0),
            max_jamming_power: dbm_to_watts(15.0),
            min_secrecy_rate: 0.5,
        }
    }
}

impl PowerParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("unit_power_cost", self.unit_power_cost),
            ("tx_amplifier", self.tx_amplifier),
            ("ev_amplifier", self.ev_amplifier),
            ("tx_circuit", self.tx_circuit),
            ("stream_circuit", self.stream_circuit),
            ("element_power", self.element_power),
            ("ev_circuit", self.ev_circuit),
            ("residual_si", self.residual_si),
            ("max_beam_power", self.max_beam_power),
            ("max_jamming_power", self.max_jamming_power),
            ("min_secrecy_rate", self.min_secrecy_rate),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.noise > 0.0) {
            return Err(Error::InvalidParameter("noise power must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-receiver SINRs and rates. `secrecy[i] == max(rate_lr[i] - rate_ev[i], 0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub sinr_lr: Vec<f64>,
    pub sinr_ev: Vec<f64>,
    pub rate_lr: Vec<f64>,
    pub rate_ev: Vec<f64>,
    pub secrecy: Vec<f64>,
}

impl RateReport {
    pub fn from_sinrs(sinr_lr: Vec<f64>, sinr_ev: Vec<f64>) -> Self {
        let rate_lr = rates(&sinr_lr);
        let rate_ev = rates(&sinr_ev);
        let secrecy = rate_lr
            .iter()
            .zip(&rate_ev)
            .map(|(&l, &e)| secrecy_rate(l, e))
            .collect();
        RateReport {
            sinr_lr,
            sinr_ev,
            rate_lr,
            rate_ev,
            secrecy,
        }
    }

    /// All-zero report, used as the "previous slot" before the first slot.
    pub fn zeros(receivers: usize) -> Self {
        Self::from_sinrs(vec![0.0; receivers], vec![0.0; receivers])
    }

    pub fn secrecy_sum(&self) -> f64 {
        self.secrecy.iter().sum()
    }

    pub fn receivers(&self) -> usize {
        self.secrecy.len()
    }
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

fn gain(row: &CVector, beam: &CVector) -> Result<f64> {
    Ok(row.dot(beam)?.norm_sqr())
}

/// SINR at receiver `i`: own stream over other streams, all jamming beams and noise.
pub fn sinr_lr(h_ai: &CVector, h_ei: &CVector, actions: &ActionProfile, i: usize, n0: f64) -> Result<f64> {
    if i >= actions.num_streams() {
        return Err(Error::DimensionMismatch {
            context: "receiver index",
            expected: actions.num_streams(),
            actual: i,
        });
    }
    let signal = gain(h_ai, &actions.beams[i])?;
    let mut interference = 0.0;
    for (j, w) in actions.beams.iter().enumerate() {
        if j != i {
            interference += gain(h_ai, w)?;
        }
    }
    for f in &actions.jammers {
        interference += gain(h_ei, f)?;
    }
    Ok(signal / (interference + n0))
}

/// SINR of stream `i` at the EV. Its own jamming is cancelled down to `n1`.
pub fn sinr_ev(h_ae: &CVector, actions: &ActionProfile, i: usize, n0: f64, n1: f64) -> Result<f64> {
    if i >= actions.num_streams() {
        return Err(Error::DimensionMismatch {
            context: "receiver index",
            expected: actions.num_streams(),
            actual: i,
        });
    }
    let signal = gain(h_ae, &actions.beams[i])?;
    let mut interference = 0.0;
    for (j, w) in actions.beams.iter().enumerate() {
        if j != i {
            interference += gain(h_ae, w)?;
        }
    }
    Ok(signal / (interference + n1 + n0))
}

/// `log2(1 + sinr)`.
pub fn rate(sinr: f64) -> f64 {
    sinr.ln_1p() / std::f64::consts::LN_2
}

pub fn rates(sinrs: &[f64]) -> Vec<f64> {
    sinrs.iter().map(|&s| rate(s)).collect()
}

pub fn secrecy_rate(r_lr: f64, r_ev: f64) -> f64 {
    (r_lr - r_ev).max(0.0)
}

/// `E^L = xi^L sum ||w_i||^2 + P_B + L P_i`.
pub fn energy_lp(actions: &ActionProfile, pp: &PowerParams) -> f64 {
    pp.tx_amplifier * actions.beam_power()
        + pp.tx_circuit
        + actions.num_streams() as f64 * pp.stream_circuit
}

/// `E^E = xi^E sum ||f_i||^2 + P^E`.
pub fn energy_ev(actions: &ActionProfile, pp: &PowerParams) -> f64 {
    pp.ev_amplifier * actions.jamming_power() + pp.ev_circuit
}

/// `E^R = K N P^R`.
pub fn energy_tirs(surfaces: usize, elements: usize, element_power: f64) -> f64 {
    surfaces as f64 * elements as f64 * element_power
}

/// SINRs and rates for every receiver given composite channels.
pub fn evaluate(ch: &CompositeChannels, actions: &ActionProfile, pp: &PowerParams) -> Result<RateReport> {
    let l = ch.lr.len();
    check_len("beamformers", l, actions.beams.len())?;
    check_len("jamming beamformers", l, actions.jammers.len())?;
    debug_assert!(
        actions.is_feasible(pp),
        "infeasible action profile reached phy: {:?}",
        actions.violations(pp)
    );
    let mut s_lr = Vec::with_capacity(l);
    let mut s_ev = Vec::with_capacity(l);
    for i in 0..l {
        s_lr.push(sinr_lr(&ch.lr[i], &ch.ev_lr[i], actions, i, pp.noise)?);
        s_ev.push(sinr_ev(&ch.ev, actions, i, pp.noise, pp.residual_si)?);
    }
    Ok(RateReport::from_sinrs(s_lr, s_ev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian, composite_channels, ChannelRealization};
    use crate::numerics::{CMatrix, C64};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cv(v: &[(f64, f64)]) -> CVector {
        CVector::new(v.iter().map(|&(a, b)| C64::new(a, b)).collect()).unwrap()
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
        CVector::new((0..n).map(|_| complex_gaussian(rng)).collect()).unwrap()
    }

    fn random_profile(rng: &mut ChaCha8Rng, l: usize, ma: usize, me: usize) -> ActionProfile {
        ActionProfile {
            beams: (0..l).map(|_| rand_vec(rng, ma)).collect(),
            jammers: (0..l).map(|_| rand_vec(rng, me)).collect(),
            phases: vec![],
        }
    }

    /// |sum_m h_m w_m|^2 expanded into real arithmetic.
    fn scalar_gain(h: &CVector, w: &CVector) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for m in 0..h.len() {
            re += h[m].re * w[m].re - h[m].im * w[m].im;
            im += h[m].re * w[m].im + h[m].im * w[m].re;
        }
        re * re + im * im
    }

    fn oracle_lr(h: &CVector, he: &CVector, a: &ActionProfile, i: usize, n0: f64) -> f64 {
        let mut den = n0;
        for j in 0..a.beams.len() {
            if j != i {
                den += scalar_gain(h, &a.beams[j]);
            }
        }
        for f in &a.jammers {
            den += scalar_gain(he, f);
        }
        scalar_gain(h, &a.beams[i]) / den
    }

    fn oracle_ev(h: &CVector, a: &ActionProfile, i: usize, n0: f64, n1: f64) -> f64 {
        let mut den = n0 + n1;
        for j in 0..a.beams.len() {
            if j != i {
                den += scalar_gain(h, &a.beams[j]);
            }
        }
        scalar_gain(h, &a.beams[i]) / den
    }

    #[test]
    fn sinr_lr_matched_signal_and_noise() {
        let h = cv(&[(1.0, 0.0), (0.0, 0.0)]);
        let he = cv(&[(1.0, 0.0)]);
        let a = ActionProfile {
            beams: vec![cv(&[(2.0, 0.0), (5.0, 0.0)])],
            jammers: vec![CVector::zeros(1)],
            phases: vec![],
        };
        assert_eq!(sinr_lr(&h, &he, &a, 0, 4.0).unwrap(), 1.0);
    }

    #[test]
    fn zero_beam_gives_zero_sinr() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = random_profile(&mut rng, 3, 4, 2);
        a.beams[1] = CVector::zeros(4);
        let h = rand_vec(&mut rng, 4);
        let he = rand_vec(&mut rng, 2);
        assert_eq!(sinr_lr(&h, &he, &a, 1, 1e-3).unwrap(), 0.0);
        assert_eq!(sinr_ev(&h, &a, 1, 1e-3, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn sinr_ev_single_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_profile(&mut rng, 1, 3, 3);
        let h = rand_vec(&mut rng, 3);
        let want = h.dot(&a.beams[0]).unwrap().norm_sqr() / (0.25 + 0.5);
        let got = sinr_ev(&h, &a, 0, 0.5, 0.25).unwrap();
        assert!((got - want).abs() <= 1e-15 * want.max(1.0));
    }

    #[test]
    fn sinr_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for l in [2usize, 3] {
            for _ in 0..50 {
                let a = random_profile(&mut rng, l, 4, 3);
                let h = rand_vec(&mut rng, 4);
                let he = rand_vec(&mut rng, 3);
                for i in 0..l {
                    let got = sinr_lr(&h, &he, &a, i, 0.1).unwrap();
                    let want = oracle_lr(&h, &he, &a, i, 0.1);
                    assert!((got - want).abs() <= 1e-12 * want);
                    let got = sinr_ev(&h, &a, i, 0.1, 0.2).unwrap();
                    let want = oracle_ev(&h, &a, i, 0.1, 0.2);
                    assert!((got - want).abs() <= 1e-12 * want);
                }
            }
        }
    }

    #[test]
    fn sinr_dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_profile(&mut rng, 2, 4, 3);
        let h = rand_vec(&mut rng, 3);
        let he = rand_vec(&mut rng, 3);
        assert!(sinr_lr(&h, &he, &a, 0, 1.0).is_err());
        assert!(sinr_ev(&h, &a, 0, 1.0, 1.0).is_err());
        assert!(sinr_ev(&rand_vec(&mut rng, 4), &a, 5, 1.0, 1.0).is_err());
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate(0.0), 0.0);
        assert!((rate(1.0) - 1.0).abs() < 1e-15);
        assert!((rate(15.0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn secrecy_examples() {
        assert_eq!(secrecy_rate(2.0, 0.5), 1.5);
        assert_eq!(secrecy_rate(0.5, 2.0), 0.0);
        for x in [0.0, 0.3, 7.0] {
            assert_eq!(secrecy_rate(x, x), 0.0);
        }
    }

    #[test]
    fn energy_examples() {
        let pp = PowerParams {
            tx_amplifier: 0.01,
            tx_circuit: 0.0,
            stream_circuit: 0.0,
            ..PowerParams::default()
        };
        let zero = ActionProfile::zeros(3, 4, 4, 2, 16);
        let d = PowerParams::default();
        assert!((energy_lp(&zero, &d) - (d.tx_circuit + 3.0 * d.stream_circuit)).abs() < 1e-15);

        let a = ActionProfile {
            beams: vec![cv(&[(3.0, 0.0), (0.0, 1.0)])],
            jammers: vec![CVector::zeros(1)],
            phases: vec![],
        };
        assert!((energy_lp(&a, &pp) - 0.1).abs() < 1e-15);
        let doubled = ActionProfile {
            beams: vec![a.beams[0].scale_real(2.0)],
            ..a.clone()
        };
        assert!((energy_lp(&doubled, &pp) - 0.4).abs() < 1e-15);

        assert_eq!(energy_ev(&zero, &d), d.ev_circuit);
        let pe = PowerParams {
            ev_amplifier: 0.1,
            ev_circuit: 0.0,
            ..PowerParams::default()
        };
        let j = ActionProfile {
            beams: vec![CVector::zeros(1)],
            jammers: vec![CVector::from_real(&[0.0316f64.sqrt()]).unwrap()],
            phases: vec![],
        };
        assert!((energy_ev(&j, &pe) - 3.16e-3).abs() < 1e-15);
        let j2 = ActionProfile {
            jammers: vec![j.jammers[0].scale_real(2.0)],
            ..j.clone()
        };
        assert!((energy_ev(&j2, &pe) - 4.0 * 3.16e-3).abs() < 1e-15);

        assert_eq!(energy_tirs(0, 16, 0.001), 0.0);
        assert!((energy_tirs(2, 16, 0.001) - 0.032).abs() < 1e-15);
    }

    #[test]
    fn feasibility_detects_each_family() {
        let pp = PowerParams::default();
        let mut a = ActionProfile::zeros(2, 2, 2, 1, 2);
        assert!(a.is_feasible(&pp));
        a.beams[0] = CVector::from_real(&[pp.max_beam_power.sqrt() * 1.01, 0.0]).unwrap();
        assert_eq!(a.violations(&pp), vec![Violation::BeamPower]);
        let mut a = ActionProfile::zeros(2, 2, 2, 1, 2);
        let half = (pp.max_jamming_power * 0.6).sqrt();
        a.jammers = vec![CVector::from_real(&[half, 0.0]).unwrap(); 2];
        assert_eq!(a.violations(&pp), vec![Violation::JammingPower]);
        let mut a = ActionProfile::zeros(2, 2, 2, 1, 2);
        a.phases[0][1] = 7.0;
        assert_eq!(a.violations(&pp), vec![Violation::PhaseRange]);
    }

    fn random_realization(rng: &mut ChaCha8Rng, l: usize, k: usize, n: usize) -> ChannelRealization {
        ChannelRealization {
            slot: 0,
            tx_surface: (0..k)
                .map(|_| CMatrix::new(n, 3, rand_vec(rng, n * 3).into_inner()).unwrap())
                .collect(),
            tx_lr: (0..l).map(|_| rand_vec(rng, 3)).collect(),
            tx_ev: rand_vec(rng, 3),
            surface_lr: (0..k).map(|_| (0..l).map(|_| rand_vec(rng, n)).collect()).collect(),
            surface_ev: (0..k).map(|_| rand_vec(rng, n)).collect(),
            ev_lr: (0..l).map(|_| rand_vec(rng, 2)).collect(),
        }
    }

    fn small_pp() -> PowerParams {
        PowerParams {
            noise: 0.05,
            residual_si: 0.05,
            max_beam_power: 1e6,
            max_jamming_power: 1e6,
            ..PowerParams::default()
        }
    }

    #[test]
    fn rates_ignore_phases_without_surfaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let re = random_realization(&mut rng, 3, 0, 4);
        let a = random_profile(&mut rng, 3, 3, 2);
        let ch = composite_channels(&re, &[]).unwrap();
        let r = evaluate(&ch, &a, &small_pp()).unwrap();
        // The phase field is irrelevant when no surface exists.
        let mut b = a.clone();
        b.phases = vec![vec![1.0, 2.0]];
        let r2 = evaluate(&ch, &b, &small_pp()).unwrap();
        assert_eq!(r, r2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn jamming_lowers_lr_sinr_only(seed in 0u64..10_000, boost in 1.0..5.0f64) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let re = random_realization(&mut rng, 3, 2, 4);
                let phases: Vec<Vec<f64>> = vec![vec![0.3; 4], vec![1.7; 4]];
                let ch = composite_channels(&re, &phases).unwrap();
                let a = random_profile(&mut rng, 3, 3, 2);
                let j = rng.random_range(0..3usize);
                let mut b = a.clone();
                b.jammers[j] = b.jammers[j].scale_real(boost);
                let ra = evaluate(&ch, &a, &small_pp()).unwrap();
                let rb = evaluate(&ch, &b, &small_pp()).unwrap();
                for i in 0..3 {
                    prop_assert!(rb.sinr_lr[i] <= ra.sinr_lr[i]);
                    prop_assert_eq!(rb.sinr_ev[i], ra.sinr_ev[i]);
                }
            }

            #[test]
            fn beam_phase_rotation_changes_nothing(seed in 0u64..10_000, alpha in 0.0..std::f64::consts::TAU) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let re = random_realization(&mut rng, 3, 1, 2);
                let ch = composite_channels(&re, &[vec![0.5, 2.5]]).unwrap();
                let a = random_profile(&mut rng, 3, 3, 2);
                let i = rng.random_range(0..3usize);
                let mut b = a.clone();
                b.beams[i] = b.beams[i].scale(C64::from_polar(1.0, alpha));
                let ra = evaluate(&ch, &a, &small_pp()).unwrap();
                let rb = evaluate(&ch, &b, &small_pp()).unwrap();
                for k in 0..3 {
                    prop_assert!((ra.sinr_lr[k] - rb.sinr_lr[k]).abs() <= 1e-10 * ra.sinr_lr[k].max(1e-300));
                    prop_assert!((ra.sinr_ev[k] - rb.sinr_ev[k]).abs() <= 1e-10 * ra.sinr_ev[k].max(1e-300));
                }
            }

            #[test]
            fn secrecy_invariant_holds(sl in proptest::collection::vec(0.0..1e6f64, 1..5), se_scale in 0.0..3.0f64) {
                let se: Vec<f64> = sl.iter().map(|s| s * se_scale).collect();
                let r = RateReport::from_sinrs(sl, se);
                for i in 0..r.receivers() {
                    prop_assert!(r.secrecy[i] >= 0.0);
                    prop_assert_eq!(r.secrecy[i], (r.rate_lr[i] - r.rate_ev[i]).max(0.0));
                }
            }
        }
    }
}
