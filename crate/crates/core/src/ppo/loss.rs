//! Returns, advantages and the two PPO losses with their gradients.

use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::policy::{GaussianPolicy, PolicyGrad};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    /// Log-probability under the policy that sampled `action`.
    pub log_prob: f64,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// `J_t = r_t + gamma J_{t+1}`, with `J = 0` past the last entry.
pub fn rewards_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// `A = J - V`.
pub fn advantages(returns: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    if returns.len() != values.len() {
        return Err(Error::DimensionMismatch {
            context: "returns vs values",
            expected: returns.len(),
            actual: values.len(),
        });
    }
    Ok(returns.iter().zip(values).map(|(j, v)| j - v).collect())
}

/// Shift to zero mean and, when the spread is not degenerate, scale to unit
/// variance.
pub fn standardize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in xs.iter_mut() {
        *x -= mean;
        if std > 1e-12 {
            *x /= std;
        }
    }
}

/// `-sum_t min(r_t A_t, clip(r_t, 1-eps, 1+eps) A_t)` with
/// `r_t = exp(log pi(a_t|s_t) - old_log_prob_t)`, minus `entropy_coef` times
/// the summed entropy. Accumulates the gradient when `grad` is given.
pub fn clip_loss(
    policy: &GaussianPolicy,
    batch: &[&Transition],
    adv: &[f64],
    eps: f64,
    entropy_coef: f64,
    mut grad: Option<&mut PolicyGrad>,
) -> f64 {
    let std = policy.std();
    let mut loss = 0.0;
    for (tr, &a) in batch.iter().zip(adv) {
        let cache = policy.mean.forward_cached(&tr.state);
        let mu = cache.output();
        let lp = policy.log_prob_with_mean(mu, &tr.action);
        let ratio = (lp - tr.log_prob).exp();
        let unclipped = ratio * a;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
        loss -= unclipped.min(clipped);
        if let Some(g) = grad.as_deref_mut() {
            if unclipped <= clipped && a != 0.0 {
                // d loss / d log pi
                let dl = -unclipped;
                let g_mu: Vec<f64> = mu
                    .iter()
                    .zip(&tr.action)
                    .zip(&std)
                    .map(|((m, x), s)| dl * (x - m) / (s * s))
                    .collect();
                policy.mean.backward(&cache, &g_mu, &mut g.mean);
                for (d, ((m, x), s)) in mu.iter().zip(&tr.action).zip(&std).enumerate() {
                    let z = (x - m) / s;
                    g.log_std[d] += dl * (z * z - 1.0);
                }
            }
            if entropy_coef != 0.0 {
                g.log_std.iter_mut().for_each(|v| *v -= entropy_coef);
            }
        }
    }
    loss - entropy_coef * batch.len() as f64 * policy.entropy()
}

/// `sum_t (V(s_t) - J_t)^2`, accumulating the gradient when asked.
pub fn value_loss(critic: &Mlp, batch: &[&Transition], returns: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
    let mut loss = 0.0;
    for (tr, j) in batch.iter().zip(returns) {
        let cache = critic.forward_cached(&tr.state);
        let resid = cache.output()[0] - j;
        loss += resid * resid;
        if let Some(g) = grad.as_deref_mut() {
            critic.backward(&cache, &[2.0 * resid], g);
        }
    }
    loss
}
