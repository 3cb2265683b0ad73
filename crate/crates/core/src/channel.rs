//! Geometry-driven channel generation.
//!
//! Every link is `sqrt(L0 * d^-beta) * h*` where `h*` mixes a line-of-sight
//! outer product of array responses with circularly-symmetric Gaussian
//! scattering according to the link's Rician factor. Reflected channels are
//! composed through diagonal phase matrices; paths bouncing off two or more
//! surfaces are not modelled.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{diag_from_phases, vecmat, CMatrix, CVector, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }

    /// Azimuth and elevation of the straight line from `self` towards `other`.
    pub fn angles_to(&self, other: &Point3) -> (f64, f64) {
        let (dx, dy, dz) = (other.x - self.x, other.y - self.y, other.z - self.z);
        (dy.atan2(dx), dz.atan2(dx.hypot(dy)))
    }

    pub fn scaled(&self, factor: f64) -> Point3 {
        Point3::new(self.x * factor, self.y * factor, self.z * factor)
    }
}

/// Node placement and array sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeGeometry {
    pub transmitter: Point3,
    pub eavesdropper: Point3,
    pub receivers: Vec<Point3>,
    pub surfaces: Vec<Point3>,
    /// `M_a`
    pub tx_antennas: usize,
    /// `M_e`, the eavesdropper's jamming array.
    pub ev_antennas: usize,
    /// `N` elements per surface.
    pub surface_elements: usize,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Inter-element spacing in wavelengths.
    pub element_spacing: f64,
}

impl NodeGeometry {
    /// Default placement used by the experiments: transmitter on one side of
    /// the area, two surfaces between it and the receivers, receivers on a
    /// 7.5 m ring around (80, 40, 1.5).
    pub fn default_layout(receivers: usize) -> Self {
        let center = Point3::new(80.0, 40.0, 1.5);
        let lrs = (0..receivers)
            .map(|i| {
                // Deterministic, so the layout needs no rng.
                let angle = TAU * i as f64 / receivers.max(1) as f64 + 0.3;
                Point3::new(center.x + 7.5 * angle.cos(), center.y + 7.5 * angle.sin(), center.z)
            })
            .collect();
        NodeGeometry {
            transmitter: Point3::new(0.0, 50.0, 20.0),
            eavesdropper: Point3::new(70.0, 60.0, 1.5),
            receivers: lrs,
            surfaces: vec![Point3::new(40.0, 20.0, 10.0), Point3::new(40.0, 80.0, 10.0)],
            tx_antennas: 4,
            ev_antennas: 4,
            surface_elements: 16,
            wavelength: 0.1,
            element_spacing: 0.5,
        }
    }

    pub fn num_receivers(&self) -> usize {
        self.receivers.len()
    }

    pub fn num_surfaces(&self) -> usize {
        self.surfaces.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tx_antennas == 0 || self.ev_antennas == 0 || self.surface_elements == 0 {
            return Err(Error::Geometry("antenna and element counts must be >= 1".into()));
        }
        if self.receivers.is_empty() {
            return Err(Error::Geometry("at least one legitimate receiver required".into()));
        }
        if !(self.wavelength > 0.0) || !(self.element_spacing > 0.0) {
            return Err(Error::Geometry("wavelength and spacing must be positive".into()));
        }
        let all = std::iter::once(&self.transmitter)
            .chain(std::iter::once(&self.eavesdropper))
            .chain(&self.receivers)
            .chain(&self.surfaces);
        for p in all {
            if ![p.x, p.y, p.z].iter().all(|v| v.is_finite()) {
                return Err(Error::Geometry("node position is not finite".into()));
            }
        }
        let lt = &self.transmitter;
        let ev = &self.eavesdropper;
        let mut links: Vec<(&str, &Point3, &Point3)> = vec![("LT-EV", lt, ev)];
        for lr in &self.receivers {
            links.push(("LT-LR", lt, lr));
            links.push(("EV-LR", ev, lr));
        }
        for irs in &self.surfaces {
            links.push(("LT-IRS", lt, irs));
            links.push(("IRS-EV", irs, ev));
            for lr in &self.receivers {
                links.push(("IRS-LR", irs, lr));
            }
        }
        for (name, a, b) in links {
            if !(a.distance(b) > 0.0) {
                return Err(Error::Geometry(format!("{name} distance must be > 0")));
            }
        }
        Ok(())
    }
}

/// Path-loss exponent and Rician factor of one link class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkFading {
    pub exponent: f64,
    pub rician: f64,
}

impl LinkFading {
    pub const fn new(exponent: f64, rician: f64) -> Self {
        LinkFading { exponent, rician }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FadingParams {
    /// `L0` in linear scale.
    pub ref_path_loss: f64,
    pub tx_surface: LinkFading,
    pub surface_lr: LinkFading,
    pub surface_ev: LinkFading,
    pub tx_lr: LinkFading,
    pub tx_ev: LinkFading,
    pub ev_lr: LinkFading,
    /// Gauss-Markov coefficient between consecutive slots' scattered parts.
    /// Zero gives i.i.d. redraws.
    pub correlation: f64,
}

impl Default for FadingParams {
    fn default() -> Self {
        FadingParams {
            ref_path_loss: 1e-3,
            tx_surface: LinkFading::new(2.0, 10.0),
            surface_lr: LinkFading::new(2.0, 10.0),
            surface_ev: LinkFading::new(2.0, 10.0),
            tx_lr: LinkFading::new(4.0, 1.0),
            tx_ev: LinkFading::new(4.0, 1.0),
            ev_lr: LinkFading::new(4.0, 1.0),
            correlation: 0.0,
        }
    }
}

impl FadingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ref_path_loss > 0.0) {
            return Err(Error::InvalidParameter("reference path loss must be > 0".into()));
        }
        for l in [
            self.tx_surface,
            self.surface_lr,
            self.surface_ev,
            self.tx_lr,
            self.tx_ev,
            self.ev_lr,
        ] {
            if !(l.exponent >= 0.0) || !(l.rician >= 0.0) {
                return Err(Error::InvalidParameter(
                    "path-loss exponents and Rician factors must be >= 0".into(),
                ));
            }
        }
        if !(0.0..1.0).contains(&self.correlation) {
            return Err(Error::InvalidParameter("correlation must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// All baseband channels of one slot. Matrices are stored in their
/// conjugate-transposed orientation, ready to multiply beamformers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub slot: u64,
    /// `G^H_{ak}`, `N x M_a`, one per surface.
    pub tx_surface: Vec<CMatrix>,
    /// `h^H_{ai}`, length `M_a`, one per receiver.
    pub tx_lr: Vec<CVector>,
    /// `h^H_{ae}`, length `M_a`.
    pub tx_ev: CVector,
    /// `g^H_{ki}`, indexed `[surface][receiver]`, length `N`.
    pub surface_lr: Vec<Vec<CVector>>,
    /// `g^H_{ke}`, length `N`, one per surface.
    pub surface_ev: Vec<CVector>,
    /// `h^H_{ei}`, length `M_e`, one per receiver.
    pub ev_lr: Vec<CVector>,
}

impl ChannelRealization {
    pub fn num_receivers(&self) -> usize {
        self.tx_lr.len()
    }

    pub fn num_surfaces(&self) -> usize {
        self.tx_surface.len()
    }

    pub fn surface_elements(&self) -> usize {
        self.tx_surface.first().map_or(0, CMatrix::rows)
    }

    pub fn tx_antennas(&self) -> usize {
        self.tx_ev.len()
    }

    pub fn ev_antennas(&self) -> usize {
        self.ev_lr.first().map_or(0, CVector::len)
    }

    /// Every complex entry in a fixed order: surface matrices, direct LT
    /// rows, the LT-EV row, surface-LR rows, surface-EV rows, EV-LR rows.
    pub fn entries(&self) -> impl Iterator<Item = &C64> + '_ {
        self.tx_surface
            .iter()
            .flat_map(|m| m.as_slice().iter())
            .chain(self.tx_lr.iter().flat_map(CVector::iter))
            .chain(self.tx_ev.iter())
            .chain(self.surface_lr.iter().flatten().flat_map(CVector::iter))
            .chain(self.surface_ev.iter().flat_map(CVector::iter))
            .chain(self.ev_lr.iter().flat_map(CVector::iter))
    }

    pub fn num_entries(&self) -> usize {
        self.entries().count()
    }

    /// Content hash of all entries, used to prove paired runs saw the same
    /// channels.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.slot.to_le_bytes());
        for z in self.entries() {
            h.update(z.re.to_le_bytes());
            h.update(z.im.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Large-scale amplitude factor `sqrt(L0 * d^-beta)`.
pub fn path_gain(distance: f64, beta: f64, l0: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Geometry(format!("distance must be > 0, got {distance}")));
    }
    Ok((l0 * distance.powf(-beta)).sqrt())
}

/// Uniform linear array response, conjugated: entry `m` is
/// `exp(-j 2pi s m sin(azimuth) cos(elevation))` for spacing `s` in wavelengths.
pub fn array_response(
    num_elements: usize,
    azimuth: f64,
    elevation: f64,
    spacing_over_lambda: f64,
) -> CVector {
    let step = TAU * spacing_over_lambda * azimuth.sin() * elevation.cos();
    let entries = (0..num_elements.max(1))
        .map(|m| {
            if m == 0 {
                C64::new(1.0, 0.0)
            } else {
                C64::from_polar(1.0, step * m as f64).conj()
            }
        })
        .collect();
    CVector::new(entries).expect("array response entries are finite")
}

/// One `CN(0, 1)` sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

fn rician_weights(k_prime: f64) -> (f64, f64) {
    if k_prime.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k_prime / (k_prime + 1.0)).sqrt(), (1.0 / (k_prime + 1.0)).sqrt())
    }
}

/// Small-scale fading `sqrt(K/(K+1)) a_left a_right^H + sqrt(1/(K+1)) W`.
/// The result has `a_left.len()` rows and `a_right.len()` columns.
pub fn rician_small_scale<R: Rng + ?Sized>(
    rng: &mut R,
    k_prime: f64,
    a_left: &CVector,
    a_right: &CVector,
) -> CMatrix {
    let (los_w, nlos_w) = rician_weights(k_prime);
    CMatrix::from_fn(a_left.len(), a_right.len(), |r, c| {
        let los = a_left[r] * a_right[c].conj();
        los * los_w + complex_gaussian(rng) * nlos_w
    })
}

/// Per-link constants: amplitude gain, LoS outer product, Rician factor.
#[derive(Clone, Debug)]
struct LinkSpec {
    gain: f64,
    los: CMatrix,
    rician: f64,
}

impl LinkSpec {
    fn new(
        from: &Point3,
        to: &Point3,
        fading: LinkFading,
        l0: f64,
        left: CVector,
        right: CVector,
    ) -> Result<Self> {
        Ok(LinkSpec {
            gain: path_gain(from.distance(to), fading.exponent, l0)?,
            los: CMatrix::outer(&left, &right),
            rician: fading.rician,
        })
    }

    fn draw_nlos<R: Rng + ?Sized>(&self, rng: &mut R) -> CMatrix {
        CMatrix::from_fn(self.los.rows(), self.los.cols(), |_, _| complex_gaussian(rng))
    }

    fn combine(&self, nlos: &CMatrix) -> CMatrix {
        let (los_w, nlos_w) = rician_weights(self.rician);
        let data = self
            .los
            .as_slice()
            .iter()
            .zip(nlos.as_slice())
            .map(|(l, n)| (l * los_w + n * nlos_w) * self.gain)
            .collect();
        CMatrix::new(self.los.rows(), self.los.cols(), data).expect("finite channel entries")
    }
}

/// Geometry-derived link constants. Drawing a realization only samples the
/// scattered components.
#[derive(Clone, Debug)]
pub struct ChannelModel {
    receivers: usize,
    surfaces: usize,
    links: Vec<LinkSpec>,
}

impl ChannelModel {
    pub fn new(geom: &NodeGeometry, fp: &FadingParams) -> Result<Self> {
        geom.validate()?;
        fp.validate()?;
        let l0 = fp.ref_path_loss;
        let s = geom.element_spacing;
        let single = || CVector::from_real(&[1.0]).expect("non-empty");
        let ula = |n: usize, from: &Point3, to: &Point3| {
            let (az, el) = from.angles_to(to);
            array_response(n, az, el, s)
        };
        let lt = &geom.transmitter;
        let ev = &geom.eavesdropper;
        let (ma, me, n) = (geom.tx_antennas, geom.ev_antennas, geom.surface_elements);

        let mut links = Vec::new();
        for irs in &geom.surfaces {
            links.push(LinkSpec::new(lt, irs, fp.tx_surface, l0, ula(n, irs, lt), ula(ma, lt, irs))?);
        }
        for lr in &geom.receivers {
            links.push(LinkSpec::new(lt, lr, fp.tx_lr, l0, single(), ula(ma, lt, lr))?);
        }
        links.push(LinkSpec::new(lt, ev, fp.tx_ev, l0, single(), ula(ma, lt, ev))?);
        for irs in &geom.surfaces {
            for lr in &geom.receivers {
                links.push(LinkSpec::new(irs, lr, fp.surface_lr, l0, single(), ula(n, irs, lr))?);
            }
        }
        for irs in &geom.surfaces {
            links.push(LinkSpec::new(irs, ev, fp.surface_ev, l0, single(), ula(n, irs, ev))?);
        }
        for lr in &geom.receivers {
            links.push(LinkSpec::new(ev, lr, fp.ev_lr, l0, single(), ula(me, ev, lr))?);
        }
        Ok(ChannelModel {
            receivers: geom.num_receivers(),
            surfaces: geom.num_surfaces(),
            links,
        })
    }

    fn draw_nlos<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<CMatrix> {
        self.links.iter().map(|l| l.draw_nlos(rng)).collect()
    }

    fn assemble(&self, slot: u64, nlos: &[CMatrix]) -> ChannelRealization {
        let mut it = self
            .links
            .iter()
            .zip(nlos)
            .map(|(l, w)| l.combine(w));
        let row = |m: CMatrix| m.row_vector(0).expect("non-empty row");
        let (k, l) = (self.surfaces, self.receivers);
        let tx_surface = (0..k).map(|_| it.next().unwrap()).collect();
        let tx_lr = (0..l).map(|_| row(it.next().unwrap())).collect();
        let tx_ev = row(it.next().unwrap());
        let surface_lr = (0..k)
            .map(|_| (0..l).map(|_| row(it.next().unwrap())).collect())
            .collect();
        let surface_ev = (0..k).map(|_| row(it.next().unwrap())).collect();
        let ev_lr = (0..l).map(|_| row(it.next().unwrap())).collect();
        ChannelRealization {
            slot,
            tx_surface,
            tx_lr,
            tx_ev,
            surface_lr,
            surface_ev,
            ev_lr,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, slot: u64) -> ChannelRealization {
        let nlos = self.draw_nlos(rng);
        self.assemble(slot, &nlos)
    }

    /// Large-scale amplitude of every entry, in [`ChannelRealization::entries`] order.
    pub fn entry_gains(&self) -> Vec<f64> {
        self.links
            .iter()
            .flat_map(|l| std::iter::repeat_n(l.gain, l.los.rows() * l.los.cols()))
            .collect()
    }
}

/// One independent realization (slot 0).
pub fn draw_realization<R: Rng + ?Sized>(
    geom: &NodeGeometry,
    fp: &FadingParams,
    rng: &mut R,
) -> Result<ChannelRealization> {
    Ok(ChannelModel::new(geom, fp)?.draw(rng, 0))
}

/// Slot-to-slot channel evolution. Geometry (so LoS parts and path gains)
/// stays fixed; scattered parts follow `W_t = a W_{t-1} + sqrt(1-a^2) V_t`.
#[derive(Clone, Debug)]
pub struct ChannelProcess {
    model: ChannelModel,
    correlation: f64,
    slot: u64,
    nlos: Option<Vec<CMatrix>>,
}

impl ChannelProcess {
    pub fn new(geom: &NodeGeometry, fp: &FadingParams) -> Result<Self> {
        Ok(ChannelProcess {
            model: ChannelModel::new(geom, fp)?,
            correlation: fp.correlation,
            slot: 0,
            nlos: None,
        })
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    /// Forget the scattered state so the next draw starts a fresh chain.
    pub fn restart(&mut self) {
        self.nlos = None;
    }

    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> ChannelRealization {
        let fresh = self.model.draw_nlos(rng);
        let nlos = match self.nlos.take() {
            Some(prev) if self.correlation > 0.0 => {
                let a = self.correlation;
                let b = (1.0 - a * a).sqrt();
                prev.iter()
                    .zip(&fresh)
                    .map(|(p, f)| p.scale_real(a).add(&f.scale_real(b)).expect("same shape"))
                    .collect()
            }
            _ => fresh,
        };
        let re = self.model.assemble(self.slot, &nlos);
        self.nlos = Some(nlos);
        self.slot += 1;
        re
    }
}

/// Equivalent channels after surface reflection.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeChannels {
    /// `H_{ai}` rows, length `M_a`.
    pub lr: Vec<CVector>,
    /// `H_{ae}` row, length `M_a`.
    pub ev: CVector,
    /// `H_{ei}` rows, length `M_e` (unchanged direct channels).
    pub ev_lr: Vec<CVector>,
}

/// `H = sum_k g^H_k Phi_k G^H_k + h^H`, for every receiver and the EV.
pub fn composite_channels(re: &ChannelRealization, phases: &[Vec<f64>]) -> Result<CompositeChannels> {
    let k = re.num_surfaces();
    if phases.len() != k {
        return Err(Error::DimensionMismatch {
            context: "phase lists per surface",
            expected: k,
            actual: phases.len(),
        });
    }
    let n = re.surface_elements();
    let mut cascades = Vec::with_capacity(k);
    for (g, p) in re.tx_surface.iter().zip(phases) {
        if p.len() != n {
            return Err(Error::DimensionMismatch {
                context: "phases per surface",
                expected: n,
                actual: p.len(),
            });
        }
        // Phi_k G^H_k, shared by every receiver.
        let phi = diag_from_phases(p)?;
        cascades.push(crate::numerics::matmul(&phi, g)?);
    }
    let reflect = |direct: &CVector, rows: &mut dyn Iterator<Item = &CVector>| -> Result<CVector> {
        let mut acc = direct.clone();
        for (g_row, casc) in rows.zip(&cascades) {
            acc = acc.add(&vecmat(g_row, casc)?)?;
        }
        Ok(acc)
    };
    let lr = re
        .tx_lr
        .iter()
        .enumerate()
        .map(|(i, h)| reflect(h, &mut re.surface_lr.iter().map(|per_lr| &per_lr[i])))
        .collect::<Result<Vec<_>>>()?;
    let ev = reflect(&re.tx_ev, &mut re.surface_ev.iter())?;
    Ok(CompositeChannels {
        lr,
        ev,
        ev_lr: re.ev_lr.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn path_gain_examples() {
        let g = path_gain(1.0, 4.0, 1e-3).unwrap();
        assert!((g - 0.031_622_776_601_683_79).abs() < 1e-15);
        for beta in [0.0, 2.0, 3.3, 4.0] {
            assert_eq!(path_gain(1.0, beta, 1e-3).unwrap(), g);
        }
        let g = path_gain(10.0, 2.0, 1e-3).unwrap();
        assert!((g - 1e-5f64.sqrt()).abs() < 1e-15);
        assert!(path_gain(0.0, 2.0, 1e-3).is_err());
        assert!(path_gain(-1.0, 2.0, 1e-3).is_err());
    }

    #[test]
    fn array_response_examples() {
        assert_eq!(array_response(1, 0.7, 0.2, 0.5).as_slice(), &[C64::new(1.0, 0.0)]);
        let a = array_response(5, 0.0, 0.4, 0.5);
        assert!(a.iter().all(|z| (*z - C64::new(1.0, 0.0)).norm() < 1e-15));
        let a = array_response(2, PI / 2.0, 0.0, 0.5);
        assert_eq!(a[0], C64::new(1.0, 0.0));
        assert!((a[1] - C64::new(-1.0, 0.0)).norm() < 1e-12);
        let a = array_response(16, 0.9, -0.3, 0.5);
        assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    fn responses() -> (CVector, CVector) {
        (array_response(3, 0.4, 0.1, 0.5), array_response(2, -1.1, 0.3, 0.5))
    }

    #[test]
    fn rician_pure_los_limit() {
        let (a, b) = responses();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = rician_small_scale(&mut rng, 1e12, &a, &b);
        let los = CMatrix::outer(&a, &b);
        for (x, y) in h.as_slice().iter().zip(los.as_slice()) {
            assert!((x - y).norm() < 1e-5);
        }
    }

    #[test]
    fn rician_nlos_variance() {
        let (a, b) = responses();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 100_000;
        let mut sum = [C64::new(0.0, 0.0); 6];
        let mut sum_sq = vec![0.0; 6];
        for _ in 0..draws {
            let h = rician_small_scale(&mut rng, 0.0, &a, &b);
            for (j, z) in h.as_slice().iter().enumerate() {
                sum[j] += z;
                sum_sq[j] += z.norm_sqr();
            }
        }
        for j in 0..6 {
            let mean = sum[j] / draws as f64;
            let var = sum_sq[j] / draws as f64 - mean.norm_sqr();
            assert!((0.98..=1.02).contains(&var), "entry {j} variance {var}");
        }
    }

    #[test]
    fn rician_mean_matches_los_weight() {
        let (a, b) = responses();
        let los = CMatrix::outer(&a, &b);
        let w = (10.0f64 / 11.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let mut sum = vec![C64::new(0.0, 0.0); 6];
        for _ in 0..draws {
            let h = rician_small_scale(&mut rng, 10.0, &a, &b);
            for (j, z) in h.as_slice().iter().enumerate() {
                sum[j] += z;
            }
        }
        // Per-component standard error: sqrt(1/(K+1) / 2 / draws).
        let se = (1.0 / 11.0 / 2.0 / draws as f64).sqrt();
        for j in 0..6 {
            let mean = sum[j] / draws as f64;
            let target = los.as_slice()[j] * w;
            assert!((mean.re - target.re).abs() < 3.0 * se, "re {j}");
            assert!((mean.im - target.im).abs() < 3.0 * se, "im {j}");
        }
    }

    #[test]
    fn draw_is_deterministic() {
        let geom = NodeGeometry::default_layout(3);
        let fp = FadingParams::default();
        let a = draw_realization(&geom, &fp, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = draw_realization(&geom, &fp, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
        let c = draw_realization(&geom, &fp, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dimensions_follow_geometry() {
        let geom = NodeGeometry::default_layout(3);
        let re = draw_realization(&geom, &FadingParams::default(), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(re.tx_surface.len(), 2);
        assert_eq!((re.tx_surface[0].rows(), re.tx_surface[0].cols()), (16, 4));
        assert_eq!(re.tx_lr.len(), 3);
        assert_eq!(re.tx_ev.len(), 4);
        assert_eq!(re.surface_lr.len(), 2);
        assert_eq!(re.surface_lr[1].len(), 3);
        assert_eq!(re.surface_lr[1][2].len(), 16);
        assert_eq!(re.ev_lr[0].len(), 4);
        assert_eq!(re.num_entries(), 2 * 64 + 12 + 4 + 96 + 32 + 12);
    }

    fn mean_abs(geom: &NodeGeometry, fp: &FadingParams, seed: u64, pick: fn(&ChannelRealization) -> f64) -> f64 {
        let model = ChannelModel::new(geom, fp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 10_000;
        (0..n).map(|_| pick(&model.draw(&mut rng, 0))).sum::<f64>() / n as f64
    }

    #[test]
    fn distance_scaling_follows_exponent() {
        let geom = NodeGeometry::default_layout(2);
        let mut far = geom.clone();
        far.transmitter = geom.transmitter.scaled(10.0);
        far.eavesdropper = geom.eavesdropper.scaled(10.0);
        far.receivers = geom.receivers.iter().map(|p| p.scaled(10.0)).collect();
        far.surfaces = geom.surfaces.iter().map(|p| p.scaled(10.0)).collect();
        let fp = FadingParams {
            tx_lr: LinkFading::new(2.0, 1.0),
            ..FadingParams::default()
        };
        let pick: fn(&ChannelRealization) -> f64 = |re| re.tx_lr[0][1].norm();
        let near_m = mean_abs(&geom, &fp, 4, pick);
        let far_m = mean_abs(&far, &fp, 5, pick);
        let ratio = far_m / near_m;
        assert!((ratio - 0.1).abs() < 0.002, "ratio {ratio}");
    }

    #[test]
    fn receiver_at_eavesdropper_position_is_statistically_identical() {
        // Co-locating the two nodes would make the EV-LR distance zero, so
        // compare an LR placed at P with an EV placed at P in a twin layout.
        let geom = NodeGeometry::default_layout(1);
        let spot = geom.eavesdropper;
        let mut with_lr = geom.clone();
        with_lr.receivers[0] = spot;
        with_lr.eavesdropper = Point3::new(10.0, 10.0, 1.5);
        let fp = FadingParams::default();
        let lr: fn(&ChannelRealization) -> f64 = |re| re.tx_lr[0].norm_sq();
        let ev: fn(&ChannelRealization) -> f64 = |re| re.tx_ev.norm_sq();
        let a = mean_abs(&with_lr, &fp, 6, lr);
        let b = mean_abs(&geom, &fp, 7, ev);
        assert!(((a - b) / b).abs() < 0.02, "{a} vs {b}");
    }

    #[test]
    fn correlated_process_is_deterministic_and_evolves() {
        let geom = NodeGeometry::default_layout(2);
        let fp = FadingParams {
            correlation: 0.9,
            ..FadingParams::default()
        };
        let mut p1 = ChannelProcess::new(&geom, &fp).unwrap();
        let mut p2 = ChannelProcess::new(&geom, &fp).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(11);
        let mut r2 = ChaCha8Rng::seed_from_u64(11);
        for slot in 0..5 {
            let a = p1.next(&mut r1);
            let b = p2.next(&mut r2);
            assert_eq!(a.slot, slot);
            assert_eq!(a, b);
        }
    }

    fn random_realization(rng: &mut ChaCha8Rng, l: usize, k: usize, n: usize, ma: usize, me: usize) -> ChannelRealization {
        let mut v = |len: usize| {
            CVector::new((0..len).map(|_| complex_gaussian(rng)).collect()).unwrap()
        };
        let tx_lr = (0..l).map(|_| v(ma)).collect();
        let tx_ev = v(ma);
        let surface_lr = (0..k).map(|_| (0..l).map(|_| v(n)).collect()).collect();
        let surface_ev = (0..k).map(|_| v(n)).collect();
        let ev_lr = (0..l).map(|_| v(me)).collect();
        let tx_surface = (0..k)
            .map(|_| CMatrix::new(n, ma, v(n * ma).into_inner()).unwrap())
            .collect();
        ChannelRealization { slot: 0, tx_surface, tx_lr, tx_ev, surface_lr, surface_ev, ev_lr }
    }

    #[test]
    fn composite_without_surfaces_is_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let re = random_realization(&mut rng, 3, 0, 4, 4, 2);
        let c = composite_channels(&re, &[]).unwrap();
        assert_eq!(c.lr, re.tx_lr);
        assert_eq!(c.ev, re.tx_ev);
        assert_eq!(c.ev_lr, re.ev_lr);
    }

    #[test]
    fn composite_single_element_identity() {
        let one = CVector::from_real(&[1.0]).unwrap();
        let zero = CVector::zeros(1);
        let re = ChannelRealization {
            slot: 0,
            tx_surface: vec![CMatrix::identity(1)],
            tx_lr: vec![zero.clone()],
            tx_ev: zero.clone(),
            surface_lr: vec![vec![one.clone()]],
            surface_ev: vec![one],
            ev_lr: vec![zero],
        };
        let theta = 1.234;
        let c = composite_channels(&re, &[vec![theta]]).unwrap();
        assert!((c.lr[0][0] - C64::from_polar(1.0, theta)).norm() < 1e-15);
        assert!((c.ev[0] - C64::from_polar(1.0, theta)).norm() < 1e-15);
    }

    /// Explicit triple sum over surfaces, elements and antennas.
    fn oracle_row(direct: &CVector, g_rows: &[&CVector], big_g: &[CMatrix], phases: &[Vec<f64>]) -> Vec<C64> {
        let ma = direct.len();
        let mut out = direct.as_slice().to_vec();
        for k in 0..g_rows.len() {
            for m in 0..ma {
                for n in 0..phases[k].len() {
                    out[m] += g_rows[k][n] * C64::from_polar(1.0, phases[k][n]) * big_g[k].get(n, m);
                }
            }
        }
        out
    }

    #[test]
    fn composite_matches_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let re = random_realization(&mut rng, 2, 2, 3, 4, 3);
        let phases: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..3).map(|_| rng.random_range(0.0..TAU)).collect())
            .collect();
        let c = composite_channels(&re, &phases).unwrap();
        for i in 0..2 {
            let rows: Vec<&CVector> = re.surface_lr.iter().map(|r| &r[i]).collect();
            let want = oracle_row(&re.tx_lr[i], &rows, &re.tx_surface, &phases);
            for (a, b) in c.lr[i].iter().zip(&want) {
                assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
            }
        }
        let rows: Vec<&CVector> = re.surface_ev.iter().collect();
        let want = oracle_row(&re.tx_ev, &rows, &re.tx_surface, &phases);
        for (a, b) in c.ev.iter().zip(&want) {
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
        }
    }

    #[test]
    fn reflected_part_is_additive_over_surfaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut re = random_realization(&mut rng, 2, 2, 4, 3, 2);
        for h in re.tx_lr.iter_mut() {
            *h = CVector::zeros(3);
        }
        re.tx_ev = CVector::zeros(3);
        let phases: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..4).map(|_| rng.random_range(0.0..TAU)).collect())
            .collect();
        let joint = composite_channels(&re, &phases).unwrap();
        let single = |k: usize| {
            let mut r = re.clone();
            r.tx_surface = vec![re.tx_surface[k].clone()];
            r.surface_lr = vec![re.surface_lr[k].clone()];
            r.surface_ev = vec![re.surface_ev[k].clone()];
            composite_channels(&r, &[phases[k].clone()]).unwrap()
        };
        let (a, b) = (single(0), single(1));
        for i in 0..2 {
            let sum = a.lr[i].add(&b.lr[i]).unwrap();
            for (x, y) in joint.lr[i].iter().zip(sum.iter()) {
                assert!((x - y).norm() <= 1e-12 * y.norm().max(1.0));
            }
        }
    }

    #[test]
    fn composite_rejects_bad_phase_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let re = random_realization(&mut rng, 1, 2, 3, 2, 2);
        assert!(composite_channels(&re, &[vec![0.0; 3]]).is_err());
        assert!(composite_channels(&re, &[vec![0.0; 3], vec![0.0; 2]]).is_err());
        assert!(composite_channels(&re, &[vec![0.0; 3], vec![0.0, 0.0, 7.0]]).is_err());
    }

    #[test]
    fn geometry_validation() {
        let mut g = NodeGeometry::default_layout(3);
        assert!(g.validate().is_ok());
        g.tx_antennas = 0;
        assert!(g.validate().is_err());
        let mut g = NodeGeometry::default_layout(3);
        g.surfaces[0] = g.transmitter;
        assert!(matches!(ChannelModel::new(&g, &FadingParams::default()), Err(Error::Geometry(_))));
    }
}
