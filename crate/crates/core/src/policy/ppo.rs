use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{gaussian_log_prob, Policy, PolicyError, RolloutBuffer};

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)` and its derivative in `r`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if unclipped <= clipped {
        (unclipped, advantage)
    } else {
        (clipped, 0.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub total: f64,
}

impl Policy {
    /// Actor weights, log standard deviations, then critic weights.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = self.actor.params.clone();
        out.extend(&self.log_std);
        out.extend(&self.critic.params);
        out
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        let a = self.actor.params.len();
        let s = self.log_std.len();
        self.actor.params.copy_from_slice(&p[..a]);
        self.log_std.copy_from_slice(&p[a..a + s]);
        self.critic.params.copy_from_slice(&p[a + s..]);
    }

    /// Length of the actor part (weights and log standard deviations).
    pub fn actor_param_len(&self) -> usize {
        self.actor.params.len() + self.log_std.len()
    }
}

/// Samples per parallel gradient chunk. Fixed so the summation order, and
/// hence the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 64;

/// Mean clipped-surrogate, value and entropy loss over `indices`, with its
/// gradient in the layout of [`Policy::flat_params`].
/// `total = policy_loss + value_coef * value_loss - entropy_coef * entropy`
/// where `value_loss = 0.5 * mean((V - R)^2)`.
pub fn loss_and_grad(
    policy: &Policy,
    buffer: &RolloutBuffer,
    advantages: &[f64],
    returns: &[f64],
    indices: &[usize],
) -> (LossParts, Vec<f64>) {
    let cfg = &policy.config;
    let a_len = policy.actor.params.len();
    let s_len = policy.log_std.len();
    let n_params = a_len + s_len + policy.critic.params.len();
    let b = indices.len() as f64;
    let inv_std: Vec<f64> = policy.log_std.iter().map(|ls| (-ls).exp()).collect();
    let act_dim = policy.act_dim();
    let chunks: Vec<(LossParts, Vec<f64>)> = indices
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; n_params];
            let mut parts = LossParts::default();
            let x = DMatrix::from_fn(policy.obs_dim(), chunk.len(), |r, c| buffer.observations[chunk[c]][r]);
            let (mean, cache) = policy.actor.forward_batch(x.clone());
            let mut d_mean = DMatrix::zeros(act_dim, chunk.len());
            for (c, &i) in chunk.iter().enumerate() {
                let u = &buffer.actions[i];
                let m = mean.column(c);
                let logp = gaussian_log_prob(u, m.as_slice(), &policy.log_std);
                let log_ratio = logp - buffer.log_probs[i];
                let ratio = log_ratio.exp();
                let (s, ds) = clipped_surrogate(ratio, advantages[i], cfg.clip_ratio);
                parts.policy_loss -= s / b;
                parts.approx_kl -= log_ratio / b;
                if (ratio - 1.0).abs() > cfg.clip_ratio {
                    parts.clip_fraction += 1.0 / b;
                }
                let dlogp = -ds * ratio / b;
                if dlogp != 0.0 {
                    for j in 0..act_dim {
                        let z = (u[j] - m[j]) * inv_std[j];
                        d_mean[(j, c)] = dlogp * z * inv_std[j];
                        grad[a_len + j] += dlogp * (z * z - 1.0);
                    }
                }
            }
            policy.actor.backward_batch(&cache, d_mean, &mut grad[..a_len]);

            let (v, vcache) = policy.critic.forward_batch(x);
            let dv = DMatrix::from_fn(1, chunk.len(), |_, c| {
                let err = v[(0, c)] - returns[chunk[c]];
                parts.value_loss += 0.5 * err * err / b;
                cfg.value_coef * err / b
            });
            policy.critic.backward_batch(&vcache, dv, &mut grad[a_len + s_len..]);
            (parts, grad)
        })
        .collect();

    let mut parts = LossParts::default();
    let mut grad = vec![0.0; n_params];
    for (p, g) in chunks {
        parts.policy_loss += p.policy_loss;
        parts.value_loss += p.value_loss;
        parts.clip_fraction += p.clip_fraction;
        parts.approx_kl += p.approx_kl;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    parts.entropy = policy.entropy();
    for g in &mut grad[a_len..a_len + s_len] {
        *g -= cfg.entropy_coef;
    }
    parts.total = parts.policy_loss + cfg.value_coef * parts.value_loss - cfg.entropy_coef * parts.entropy;
    (parts, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Separate Adam states for the actor (with log std) and the critic.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    actor: Adam,
    critic: Adam,
}

impl Optimizer {
    pub fn new(policy: &Policy) -> Self {
        Optimizer {
            actor: Adam::new(policy.actor_param_len()),
            critic: Adam::new(policy.critic.params.len()),
        }
    }
}

/// Means over all minibatch updates of one call.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub minibatches: usize,
}

fn clip_norm(g: &mut [f64], max: f64) {
    let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > max {
        let s = max / n;
        for v in g {
            *v *= s;
        }
    }
}

/// Standardizes the advantages over the whole buffer, then runs `epochs`
/// passes of shuffled minibatch updates.
pub fn ppo_update<R: Rng>(
    policy: &mut Policy,
    optim: &mut Optimizer,
    buffer: &RolloutBuffer,
    rng: &mut R,
) -> Result<UpdateStats, PolicyError> {
    let (raw, returns) = match (&buffer.advantages, &buffer.returns) {
        (Some(a), Some(r)) => (a, r),
        _ => return Err(PolicyError::MissingAdvantages),
    };
    let n = raw.len();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let std = (raw.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let adv: Vec<f64> = raw.iter().map(|a| (a - mean) / (std + 1e-8)).collect();

    let cfg = policy.config.clone();
    let a_len = policy.actor_param_len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for (batch, idx) in order.chunks(cfg.minibatch_size).enumerate() {
            let (parts, mut grad) = loss_and_grad(policy, buffer, &adv, returns, idx);
            if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(PolicyError::NonFinite {
                    epoch,
                    batch,
                    detail: format!(
                        "policy loss {} value loss {} entropy {} approx kl {}",
                        parts.policy_loss, parts.value_loss, parts.entropy, parts.approx_kl
                    ),
                });
            }
            let (ga, gc) = grad.split_at_mut(a_len);
            clip_norm(ga, cfg.max_grad_norm);
            clip_norm(gc, cfg.max_grad_norm);
            let mut params = policy.flat_params();
            let (pa, pc) = params.split_at_mut(a_len);
            optim.actor.step(pa, ga, cfg.actor_lr);
            optim.critic.step(pc, gc, cfg.critic_lr);
            policy.set_flat_params(&params);

            stats.policy_loss += parts.policy_loss;
            stats.value_loss += parts.value_loss;
            stats.entropy += parts.entropy;
            stats.clip_fraction += parts.clip_fraction;
            stats.approx_kl += parts.approx_kl;
            stats.minibatches += 1;
        }
    }
    let k = stats.minibatches.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.clip_fraction /= k;
    stats.approx_kl /= k;
    Ok(stats)
}
