//! Actor-critic networks and the clipped PPO update, written out by hand.

mod adam;
mod agent;
mod checkpoint;
mod loss;
mod mlp;
mod policy;

pub use adam::Adam;
pub use agent::{Agent, PpoConfig, UpdateStats};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use loss::{advantages, clip_loss, rewards_to_go, standardize, value_loss, Transition};
pub use mlp::{param_count, Mlp, MlpCache};
pub use policy::{GaussianPolicy, PolicyGrad, LOG_STD_MAX, LOG_STD_MIN};
