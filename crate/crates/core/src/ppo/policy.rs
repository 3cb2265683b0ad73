//! Diagonal Gaussian policy over raw actions with a learned,
//! state-independent log standard deviation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;

pub const LOG_STD_MIN: f64 = -9.210340371976182; // ln 1e-4
pub const LOG_STD_MAX: f64 = std::f64::consts::LN_10;

const HALF_LN_TAU: f64 = 0.9189385332046727; // ln(2 pi) / 2

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

/// Gradient with respect to both parts of a policy.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGrad {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl PolicyGrad {
    pub fn zeros(p: &GaussianPolicy) -> Self {
        PolicyGrad {
            mean: vec![0.0; p.mean.num_params()],
            log_std: vec![0.0; p.log_std.len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().chain(&self.log_std).all(|g| g.is_finite())
    }
}

impl GaussianPolicy {
    pub fn new(mean: Mlp, init_log_std: f64) -> Self {
        let d = mean.output_dim();
        GaussianPolicy {
            mean,
            log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); d],
        }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn clamp_log_std(&mut self) {
        self.log_std.iter_mut().for_each(|s| *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|s| s.clamp(LOG_STD_MIN, LOG_STD_MAX).exp()).collect()
    }

    /// `log N(action; mu, diag(sigma^2))` for a given mean.
    pub fn log_prob_with_mean(&self, mu: &[f64], action: &[f64]) -> f64 {
        mu.iter()
            .zip(action)
            .zip(&self.log_std)
            .map(|((m, a), ls)| {
                let ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let z = (a - m) / ls.exp();
                -0.5 * z * z - ls - HALF_LN_TAU
            })
            .sum()
    }

    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> f64 {
        self.log_prob_with_mean(&self.mean.forward(state), action)
    }

    pub fn mean_action(&self, state: &[f64]) -> Vec<f64> {
        self.mean.forward(state)
    }

    /// Draw an action; returns it with its log-probability.
    pub fn sample<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
        let mu = self.mean.forward(state);
        let action: Vec<f64> = mu
            .iter()
            .zip(self.std())
            .map(|(m, s)| {
                let z: f64 = rng.sample(StandardNormal);
                m + s * z
            })
            .collect();
        let lp = self.log_prob_with_mean(&mu, &action);
        (action, lp)
    }

    /// Differential entropy, independent of the state.
    pub fn entropy(&self) -> f64 {
        self.log_std
            .iter()
            .map(|s| s.clamp(LOG_STD_MIN, LOG_STD_MAX) + HALF_LN_TAU + 0.5)
            .sum()
    }
}
