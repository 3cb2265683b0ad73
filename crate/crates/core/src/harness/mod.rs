//! Algorithm 1 end to end: offline pretraining, the online switch stage,
//! fixed-partition baselines and the files they produce.

mod config;
mod online;
mod output;
mod record;
mod train;

pub use config::{
    EnvSection, ExperimentConfig, FadingConfig, GameConfig, GeometryConfig, LinkConfig, OnlineConfig, OutputConfig,
    PowerConfig, TrainingConfig,
};
pub use online::{online_run, run_baseline, Mode};
pub use output::{
    emit_outputs, emit_training_curve, plot_series, read_record, write_plot_csv, write_slots_csv, PlotRow,
    CURVE_SCHEMA_VERSION, SLOT_SCHEMA_VERSION,
};
pub use record::{Aggregate, ContextRow, RunRecord, SlotRow, Summary, RECORD_FORMAT, RECORD_VERSION};
pub use train::{offline_pretrain, offline_pretrain_with, AgentSet, EpisodeRow, PretrainReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream ids derived from one master seed.
pub mod streams {
    pub const PRETRAIN_CHANNEL: u64 = 1;
    /// Agents use `AGENT_BASE + index` in [`crate::env::AGENT_COALITIONS`] order.
    pub const AGENT_BASE: u64 = 2;
    /// Fixed channel draws for the per-episode evaluation curve.
    pub const EVAL_CHANNEL: u64 = 6;
    pub const ONLINE_CHANNEL: u64 = 10;
    pub const TIRS_START: u64 = 11;
    pub const FINE_TUNE: u64 = 12;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
