//! Residual policy: a squashed Gaussian over per-joint corrections added to
//! the retargeted primitive actions, trained with clipped policy gradients.

mod buffer;
mod checkpoint;
mod mlp;
mod normalizer;
mod ppo;
mod rollout;
mod train;

#[cfg(test)]
mod tests;

pub use buffer::{compute_advantages, RolloutBuffer};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use mlp::{Mlp, MlpCache};
pub use normalizer::RunningNorm;
pub use ppo::{clipped_surrogate, loss_and_grad, ppo_update, Adam, LossParts, Optimizer, UpdateStats};
pub use rollout::{collect_rollouts, FinishedEpisode, Rollout, RolloutWorker};
pub use train::{train, CurveRow, EvalPlan, TrainOutput};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvError;
use crate::kinematics::{JointKind, KinematicChain};
use crate::retarget::RetargetError;
use crate::task::{Task, TaskError};
use crate::trajectory::TrajectoryError;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid policy config: {0}")]
    Config(String),
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite loss at epoch {epoch}, minibatch {batch}: {detail}")]
    NonFinite { epoch: usize, batch: usize, detail: String },
    #[error("advantages have not been computed")]
    MissingAdvantages,
    #[error("incomplete rollout buffer: {0}")]
    Incomplete(String),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("retargeting: {0}")]
    Retarget(#[from] RetargetError),
    #[error("trajectory: {0}")]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("evaluation: {0}")]
    Eval(#[from] crate::eval::EvalError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Switches mirroring the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// Add the retargeted primitive action; when false the residual acts alone.
    pub use_prim_actions: bool,
    pub use_contacts: bool,
    /// Frames of goal lookahead in the observation.
    pub horizon_phi: usize,
    /// Re-place every training episode with a random workspace transform.
    pub use_data_aug: bool,
    pub sparse_reward: bool,
}

impl Default for Ablations {
    fn default() -> Self {
        Ablations {
            use_prim_actions: true,
            use_contacts: true,
            horizon_phi: 5,
            use_data_aug: true,
            sparse_reward: false,
        }
    }
}

impl Ablations {
    /// The task as the policy sees it: contact slots, goal horizon, reward
    /// mode and training augmentation set from the switches.
    pub fn apply(&self, task: &Task) -> Task {
        let mut t = task.clone();
        t.env.observe_contacts = self.use_contacts;
        t.env.horizon = self.horizon_phi;
        t.reward.sparse_mode = self.sparse_reward;
        if !self.use_data_aug {
            t.augmentation = None;
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    /// Initial standard deviation of the pre-squash Gaussian.
    pub action_std_init: f64,
    pub clip_ratio: f64,
    pub discount: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Steps per environment per iteration.
    pub rollout_length: usize,
    pub num_envs: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Largest residual per revolute joint (rad).
    pub residual_scale: f64,
    /// Largest residual per prismatic joint (m).
    pub prismatic_residual_scale: f64,
    /// Environment step budget; training runs whole iterations within it.
    pub total_steps: usize,
    /// Iterations between evaluations (and curve rows).
    pub eval_interval: usize,
    pub ablations: Ablations,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: vec![256, 256],
            action_std_init: 0.3,
            clip_ratio: 0.2,
            discount: 0.99,
            gae_lambda: 0.95,
            epochs: 4,
            minibatch_size: 256,
            rollout_length: 128,
            num_envs: 16,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            residual_scale: 0.05,
            prismatic_residual_scale: 0.001,
            total_steps: 200_000,
            eval_interval: 10,
            ablations: Ablations::default(),
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::Config(m.into()));
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return bad("clip_ratio must lie in (0, 1)");
        }
        if !(self.residual_scale > 0.0 && self.prismatic_residual_scale > 0.0) {
            return bad("residual scales must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden sizes must be non-empty and positive");
        }
        if !((0.0..=1.0).contains(&self.discount) && (0.0..=1.0).contains(&self.gae_lambda)) {
            return bad("discount and gae_lambda must lie in [0, 1]");
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.rollout_length == 0 || self.num_envs == 0 {
            return bad("epochs, minibatch_size, rollout_length and num_envs must be at least 1");
        }
        if self.eval_interval == 0 {
            return bad("eval_interval must be at least 1");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.action_std_init > 0.0 && self.max_grad_norm > 0.0) {
            return bad("learning rates, action_std_init and max_grad_norm must be positive");
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return bad("entropy_coef and value_coef must be non-negative");
        }
        if self.ablations.horizon_phi == 0 {
            return bad("horizon_phi must be at least 1");
        }
        Ok(())
    }

    /// Steps collected per iteration.
    pub fn batch_steps(&self) -> usize {
        self.num_envs * self.rollout_length
    }

    pub fn iterations(&self) -> usize {
        self.total_steps / self.batch_steps()
    }

    /// Per-joint residual bounds for `chain`.
    pub fn residual_scales(&self, chain: &KinematicChain) -> Vec<f64> {
        chain
            .joints()
            .iter()
            .map(|j| match j.kind {
                JointKind::Prismatic => self.prismatic_residual_scale,
                _ => self.residual_scale,
            })
            .collect()
    }
}

/// `a_p + a_r`.
pub fn compose_action(primitive: &DVector<f64>, residual: &DVector<f64>) -> Result<DVector<f64>, PolicyError> {
    if primitive.len() != residual.len() {
        return Err(PolicyError::Dimension {
            expected: primitive.len(),
            got: residual.len(),
        });
    }
    Ok(primitive + residual)
}

/// One sampled (or mean) residual with the quantities training needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyAction {
    pub residual: DVector<f64>,
    /// Gaussian sample before squashing.
    pub pre_squash: Vec<f64>,
    /// Log density of `residual` under the squashed distribution.
    pub log_prob: f64,
    /// Log density of `pre_squash` under the Gaussian.
    pub gauss_log_prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub config: PolicyConfig,
    pub scales: Vec<f64>,
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: Vec<f64>,
    pub normalizer: RunningNorm,
}

impl Policy {
    pub fn new<R: Rng>(config: &PolicyConfig, obs_dim: usize, scales: Vec<f64>, rng: &mut R) -> Result<Policy, PolicyError> {
        config.validate()?;
        let act_dim = scales.len();
        let mut sizes = vec![obs_dim];
        sizes.extend(&config.hidden);
        let mut actor_sizes = sizes.clone();
        actor_sizes.push(act_dim);
        sizes.push(1);
        let actor = Mlp::init(&actor_sizes, 0.01, rng);
        let critic = Mlp::init(&sizes, 1.0, rng);
        Ok(Policy {
            config: config.clone(),
            log_std: vec![config.action_std_init.ln(); act_dim],
            scales,
            actor,
            critic,
            normalizer: RunningNorm::new(obs_dim),
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.scales.len()
    }

    /// Normalizes `obs` with the frozen statistics and acts.
    pub fn act<R: Rng>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<PolicyAction, PolicyError> {
        if obs.len() != self.obs_dim() {
            return Err(PolicyError::Dimension {
                expected: self.obs_dim(),
                got: obs.len(),
            });
        }
        Ok(self.act_normalized(&self.normalizer.normalize(obs), deterministic, rng))
    }

    pub fn act_normalized<R: Rng>(&self, nobs: &[f64], deterministic: bool, rng: &mut R) -> PolicyAction {
        let mean = self.actor.forward(nobs);
        let u: Vec<f64> = if deterministic {
            mean.clone()
        } else {
            mean.iter()
                .zip(&self.log_std)
                .map(|(m, ls)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + ls.exp() * z
                })
                .collect()
        };
        let gauss = gaussian_log_prob(&u, &mean, &self.log_std);
        let residual = DVector::from_fn(u.len(), |j, _| self.scales[j] * u[j].tanh());
        let log_prob = gauss - squash_log_jacobian(&u, &self.scales);
        PolicyAction {
            residual,
            pre_squash: u,
            log_prob,
            gauss_log_prob: gauss,
            value: self.critic.forward(nobs)[0],
        }
    }

    pub fn value_normalized(&self, nobs: &[f64]) -> f64 {
        self.critic.forward(nobs)[0]
    }

    /// Entropy of the pre-squash Gaussian.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (1.0 + LN_2PI)).sum()
    }
}

pub(crate) fn gaussian_log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((u, m), ls)| {
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

/// `sum log(scale (1 - tanh(u)^2))`, written to stay finite for large `|u|`.
fn squash_log_jacobian(u: &[f64], scales: &[f64]) -> f64 {
    u.iter()
        .zip(scales)
        .map(|(u, s)| {
            let x = -2.0 * u;
            let softplus = if x > 30.0 { x } else { x.exp().ln_1p() };
            s.ln() + 2.0 * (std::f64::consts::LN_2 - u - softplus)
        })
        .sum()
}
