//! Experiment configuration, read from TOML. dB and dBm values appear only
//! here; [`ExperimentConfig::power_params`] and friends convert them once.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{FadingParams, LinkFading, NodeGeometry, Point3};
use crate::econ::Player;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::phy::{db_to_linear, dbm_to_watts, PowerParams};
use crate::ppo::PpoConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub transmitter: [f64; 3],
    pub eavesdropper: [f64; 3],
    /// One position per LR; `L` is the length.
    pub receivers: Vec<[f64; 3]>,
    /// One position per surface; `K` is the length.
    pub surfaces: Vec<[f64; 3]>,
    /// `M_a`
    pub tx_antennas: usize,
    /// `M_e`
    pub ev_antennas: usize,
    /// `N`
    pub surface_elements: usize,
    pub wavelength: f64,
    /// In wavelengths.
    pub element_spacing: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    /// `beta`
    pub exponent: f64,
    /// `K'`
    pub rician: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingConfig {
    /// `L0`
    pub ref_path_loss_db: f64,
    /// Links through a surface.
    pub reflected: LinkConfig,
    /// LT-LR, LT-EV and EV-LR links.
    pub direct: LinkConfig,
    pub correlation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    /// `rho`
    pub unit_power_cost: f64,
    /// `xi^L`
    pub tx_amplifier: f64,
    /// `xi^E`
    pub ev_amplifier: f64,
    /// `P_B`, watts.
    pub tx_circuit_w: f64,
    /// `P_i`, watts.
    pub stream_circuit_w: f64,
    /// `P^R`, watts.
    pub element_power_w: f64,
    /// `P^E`, watts.
    pub ev_circuit_w: f64,
    /// `N_0`
    pub noise_dbm: f64,
    /// `N_1`
    pub residual_si_dbm: f64,
    /// `P^L_max`
    pub max_beam_power_dbm: f64,
    /// `P^E_max`
    pub max_jamming_power_dbm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    /// `eta`
    pub penalty_weight: f64,
    /// `C_conf`
    pub conflict_cost: f64,
    /// `R^sec_min`, bits/s/Hz.
    pub min_secrecy_rate: f64,
    pub switch_order: Vec<Player>,
    pub max_switch_passes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub rate_scale: f64,
    pub mask_ev_observation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// `N^epi`
    pub episodes: usize,
    /// `Gamma`, slots per episode.
    pub episode_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineConfig {
    /// `T`
    pub slots: usize,
    pub inner_max_iters: usize,
    /// Relative utility change regarded as converged.
    pub inner_tolerance: f64,
    /// Consecutive converged iterations required.
    pub inner_patience: usize,
    /// Keep updating the agents during the online stage.
    pub fine_tune: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    /// Maximum rows of a downsampled plot series.
    pub plot_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub geometry: GeometryConfig,
    pub fading: FadingConfig,
    pub power: PowerConfig,
    pub game: GameConfig,
    pub env: EnvSection,
    pub ppo: PpoConfig,
    pub training: TrainingConfig,
    pub online: OnlineConfig,
    pub output: OutputConfig,
}

fn p3(a: [f64; 3]) -> Point3 {
    Point3::new(a[0], a[1], a[2])
}

fn arr(p: &Point3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let g = NodeGeometry::default_layout(3);
        ExperimentConfig {
            seeds: vec![1, 2, 3, 4, 5],
            geometry: GeometryConfig {
                transmitter: arr(&g.transmitter),
                eavesdropper: arr(&g.eavesdropper),
                receivers: g.receivers.iter().map(arr).collect(),
                surfaces: g.surfaces.iter().map(arr).collect(),
                tx_antennas: g.tx_antennas,
                ev_antennas: g.ev_antennas,
                surface_elements: g.surface_elements,
                wavelength: g.wavelength,
                element_spacing: g.element_spacing,
            },
            fading: FadingConfig {
                ref_path_loss_db: -30.0,
                reflected: LinkConfig { exponent: 2.0, rician: 10.0 },
                direct: LinkConfig { exponent: 4.0, rician: 1.0 },
                correlation: 0.0,
            },
            power: PowerConfig {
                unit_power_cost: 0.001,
                tx_amplifier: 0.01,
                ev_amplifier: 0.1,
                tx_circuit_w: 0.2,
                stream_circuit_w: 0.01,
                element_power_w: 0.001,
                ev_circuit_w: 0.1,
                noise_dbm: -174.0,
                residual_si_dbm: -174.0,
                max_beam_power_dbm: 40.0,
                max_jamming_power_dbm: 15.0,
            },
            game: GameConfig {
                penalty_weight: 2.0,
                conflict_cost: 0.1,
                min_secrecy_rate: 0.5,
                switch_order: vec![Player::Tirs, Player::Lp, Player::Ev],
                max_switch_passes: 8,
            },
            env: EnvSection {
                rate_scale: 0.1,
                mask_ev_observation: false,
            },
            ppo: PpoConfig::default(),
            training: TrainingConfig {
                episodes: 2000,
                episode_len: 64,
            },
            online: OnlineConfig {
                slots: 200,
                inner_max_iters: 50,
                inner_tolerance: 1e-3,
                inner_patience: 5,
                fine_tune: false,
            },
            output: OutputConfig {
                dir: PathBuf::from("out"),
                checkpoint_dir: PathBuf::from("checkpoints"),
                plot_points: 200,
            },
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seed list must not be empty");
        }
        self.geometry().validate()?;
        self.fading_params().validate()?;
        self.power_params().validate()?;
        self.ppo.validate()?;
        let g = &self.game;
        if !(g.penalty_weight >= 0.0) || !(g.conflict_cost >= 0.0) {
            return bad("penalty weight and conflict cost must be >= 0");
        }
        let mut order = g.switch_order.clone();
        order.sort();
        if order != Player::ALL.to_vec() {
            return bad("switch order must list each player exactly once");
        }
        if g.max_switch_passes == 0 {
            return bad("max switch passes must be >= 1");
        }
        if !(self.env.rate_scale > 0.0) {
            return bad("rate scale must be > 0");
        }
        if self.training.episodes == 0 || self.training.episode_len == 0 {
            return bad("episodes and episode length must be >= 1");
        }
        let o = &self.online;
        if o.slots == 0 || o.inner_max_iters == 0 || o.inner_patience == 0 || !(o.inner_tolerance >= 0.0) {
            return bad("online slots, iteration limits and tolerance out of range");
        }
        if self.output.plot_points == 0 {
            return bad("plot points must be >= 1");
        }
        Ok(())
    }

    pub fn geometry(&self) -> NodeGeometry {
        let g = &self.geometry;
        NodeGeometry {
            transmitter: p3(g.transmitter),
            eavesdropper: p3(g.eavesdropper),
            receivers: g.receivers.iter().copied().map(p3).collect(),
            surfaces: g.surfaces.iter().copied().map(p3).collect(),
            tx_antennas: g.tx_antennas,
            ev_antennas: g.ev_antennas,
            surface_elements: g.surface_elements,
            wavelength: g.wavelength,
            element_spacing: g.element_spacing,
        }
    }

    pub fn fading_params(&self) -> FadingParams {
        let f = &self.fading;
        let r = LinkFading::new(f.reflected.exponent, f.reflected.rician);
        let d = LinkFading::new(f.direct.exponent, f.direct.rician);
        FadingParams {
            ref_path_loss: db_to_linear(f.ref_path_loss_db),
            tx_surface: r,
            surface_lr: r,
            surface_ev: r,
            tx_lr: d,
            tx_ev: d,
            ev_lr: d,
            correlation: f.correlation,
        }
    }

    pub fn power_params(&self) -> PowerParams {
        let p = &self.power;
        PowerParams {
            unit_power_cost: p.unit_power_cost,
            tx_amplifier: p.tx_amplifier,
            ev_amplifier: p.ev_amplifier,
            tx_circuit: p.tx_circuit_w,
            stream_circuit: p.stream_circuit_w,
            element_power: p.element_power_w,
            ev_circuit: p.ev_circuit_w,
            noise: dbm_to_watts(p.noise_dbm),
            residual_si: dbm_to_watts(p.residual_si_dbm),
            max_beam_power: dbm_to_watts(p.max_beam_power_dbm),
            max_jamming_power: dbm_to_watts(p.max_jamming_power_dbm),
            min_secrecy_rate: self.game.min_secrecy_rate,
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            penalty_weight: self.game.penalty_weight,
            conflict_cost: self.game.conflict_cost,
            rate_scale: self.env.rate_scale,
            mask_ev_observation: self.env.mask_ev_observation,
        }
    }

    /// Hash of everything that shapes a run (output paths and the seed list
    /// excluded).
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output = ExperimentConfig::default().output;
        c.seeds.clear();
        digest(&c)
    }

    /// Hash tying checkpoints to the settings that produced them and the
    /// seed they were trained with.
    pub fn training_hash(&self, seed: u64) -> String {
        let mut c = self.clone();
        c.output = ExperimentConfig::default().output;
        c.seeds = vec![seed];
        c.online = ExperimentConfig::default().online;
        digest(&c)
    }
}

fn digest(c: &ExperimentConfig) -> String {
    let text = serde_json::to_string(c).expect("config serializes");
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}
