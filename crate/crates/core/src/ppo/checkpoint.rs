//! Agent checkpoints as versioned JSON with explicit layer shapes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::agent::{Agent, PpoConfig};
use super::mlp::Mlp;
use super::policy::GaussianPolicy;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "rcfg-agent";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub coalition: String,
    pub actor_sizes: Vec<usize>,
    pub critic_sizes: Vec<usize>,
    pub actor: Vec<f64>,
    pub log_std: Vec<f64>,
    pub critic: Vec<f64>,
}

impl Checkpoint {
    pub fn of(agent: &Agent, coalition: &str, config_hash: &str) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.into(),
            coalition: coalition.into(),
            actor_sizes: agent.policy.mean.sizes().to_vec(),
            critic_sizes: agent.critic.sizes().to_vec(),
            actor: agent.policy.mean.params().to_vec(),
            log_std: agent.policy.log_std.clone(),
            critic: agent.critic.params().to_vec(),
        }
    }

    /// Rebuild an agent, rejecting anything that does not match the
    /// expected shapes or configuration.
    pub fn into_agent(self, cfg: &PpoConfig, state_dim: usize, action_dim: usize, config_hash: &str) -> Result<Agent> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {} v{} (want {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                self.format, self.version
            )));
        }
        if self.config_hash != config_hash {
            return Err(Error::Checkpoint(format!(
                "config hash {} does not match {config_hash}",
                self.config_hash
            )));
        }
        let want_actor = cfg.actor_sizes(state_dim, action_dim);
        let want_critic = cfg.critic_sizes(state_dim);
        if self.actor_sizes != want_actor || self.critic_sizes != want_critic {
            return Err(Error::Checkpoint(format!(
                "shape mismatch: actor {:?} critic {:?}, expected {want_actor:?} {want_critic:?}",
                self.actor_sizes, self.critic_sizes
            )));
        }
        if self.log_std.len() != action_dim {
            return Err(Error::Checkpoint(format!(
                "log-std length {} != action dim {action_dim}",
                self.log_std.len()
            )));
        }
        let reject = |e: Error| Error::Checkpoint(e.to_string());
        let mean = Mlp::from_params(self.actor_sizes, self.actor).map_err(reject)?;
        let critic = Mlp::from_params(self.critic_sizes, self.critic).map_err(reject)?;
        let mut policy = GaussianPolicy::new(mean, 0.0);
        policy.log_std = self.log_std;
        policy.clamp_log_std();
        Ok(Agent::from_parts(policy, critic, cfg.clone()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::ser(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::ser(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> PpoConfig {
        PpoConfig { hidden: vec![6, 5], ..PpoConfig::default() }
    }

    #[test]
    fn round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let agent = Agent::new(4, 3, cfg(), &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        Checkpoint::of(&agent, "LR", "abc").save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap().into_agent(&cfg(), 4, 3, "abc").unwrap();
        assert_eq!(back.policy, agent.policy);
        assert_eq!(back.critic, agent.critic);
    }

    #[test]
    fn mismatches_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let agent = Agent::new(4, 3, cfg(), &mut rng).unwrap();
        let ck = Checkpoint::of(&agent, "LR", "abc");
        assert!(ck.clone().into_agent(&cfg(), 5, 3, "abc").is_err());
        assert!(ck.clone().into_agent(&cfg(), 4, 2, "abc").is_err());
        assert!(ck.clone().into_agent(&cfg(), 4, 3, "xyz").is_err());
        let other = PpoConfig { hidden: vec![6], ..cfg() };
        assert!(matches!(ck.clone().into_agent(&other, 4, 3, "abc"), Err(Error::Checkpoint(_))));
        let mut bad = ck.clone();
        bad.version = 99;
        assert!(bad.into_agent(&cfg(), 4, 3, "abc").is_err());
        let mut short = ck;
        short.actor.pop();
        assert!(short.into_agent(&cfg(), 4, 3, "abc").is_err());
    }

    #[test]
    fn missing_file_reports_path() {
        let err = Checkpoint::load(Path::new("/nonexistent/ck.json")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/ck.json"));
    }
}
