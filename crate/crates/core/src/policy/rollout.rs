use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{compose_action, Policy, PolicyError, RolloutBuffer};
use crate::env::GraspEnv;
use crate::task::Task;

/// One environment stream with its own random number stream; episodes are
/// drawn from the task whenever the previous one ends.
pub struct RolloutWorker {
    env: GraspEnv,
    obs: Vec<f64>,
    rng: ChaCha8Rng,
    episode_return: f64,
}

/// Summary of an episode that ended during collection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinishedEpisode {
    pub episode_return: f64,
    pub grasped: bool,
    pub success: bool,
}

impl RolloutWorker {
    /// Worker `index` of a run seeded by `seed`.
    pub fn new(task: &Task, seed: u64, index: usize) -> Result<Self, PolicyError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        let (env, obs) = Self::start(task, &mut rng)?;
        Ok(RolloutWorker {
            env,
            obs,
            rng,
            episode_return: 0.0,
        })
    }

    fn start(task: &Task, rng: &mut ChaCha8Rng) -> Result<(GraspEnv, Vec<f64>), PolicyError> {
        let ep = task.sample_episode(rng)?;
        Ok(GraspEnv::reset(&ep.spec, &ep.demo, &ep.joints, ep.noise_seed)?)
    }

    fn run(&mut self, policy: &Policy, task: &Task, length: usize) -> Result<Segment, PolicyError> {
        let use_prim = policy.config.ablations.use_prim_actions;
        let dof = policy.act_dim();
        let mut seg = Segment::default();
        for _ in 0..length {
            let nobs = policy.normalizer.normalize(&self.obs);
            let a = policy.act_normalized(&nobs, false, &mut self.rng);
            let prim = if use_prim {
                self.env.primitive_action()
            } else {
                DVector::zeros(dof)
            };
            let out = self.env.step(&compose_action(&prim, &a.residual)?)?;
            self.episode_return += out.reward;
            seg.raw.push(std::mem::replace(&mut self.obs, out.observation));
            seg.obs.push(nobs);
            seg.actions.push(a.pre_squash);
            seg.log_probs.push(a.gauss_log_prob);
            seg.values.push(a.value);
            seg.rewards.push(out.reward);
            seg.dones.push(out.done);
            if out.done {
                seg.finished.push(FinishedEpisode {
                    episode_return: self.episode_return,
                    grasped: self.env.grasped(),
                    success: out.info.success,
                });
                self.episode_return = 0.0;
                let (env, obs) = Self::start(task, &mut self.rng)?;
                self.env = env;
                self.obs = obs;
            }
        }
        seg.bootstrap = policy.value_normalized(&policy.normalizer.normalize(&self.obs));
        Ok(seg)
    }
}

#[derive(Default)]
struct Segment {
    raw: Vec<Vec<f64>>,
    obs: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    bootstrap: f64,
    finished: Vec<FinishedEpisode>,
}

/// Result of one collection round.
pub struct Rollout {
    pub buffer: RolloutBuffer,
    /// Unnormalized observations in buffer order, for the normalizer.
    pub raw_observations: Vec<Vec<f64>>,
    pub finished: Vec<FinishedEpisode>,
}

/// Steps every worker `length` times with `a_p + a_r` (sampled residual;
/// `a_p = 0` when primitives are ablated), in parallel. The observation
/// statistics stay frozen during collection.
pub fn collect_rollouts(
    policy: &Policy,
    workers: &mut [RolloutWorker],
    task: &Task,
    length: usize,
) -> Result<Rollout, PolicyError> {
    let segments = workers
        .par_iter_mut()
        .map(|w| w.run(policy, task, length))
        .collect::<Result<Vec<_>, PolicyError>>()?;
    let mut buffer = RolloutBuffer {
        num_envs: workers.len(),
        length,
        ..RolloutBuffer::default()
    };
    let mut raw = Vec::with_capacity(workers.len() * length);
    let mut finished = Vec::new();
    for s in segments {
        raw.extend(s.raw);
        buffer.observations.extend(s.obs);
        buffer.actions.extend(s.actions);
        buffer.log_probs.extend(s.log_probs);
        buffer.values.extend(s.values);
        buffer.rewards.extend(s.rewards);
        buffer.dones.extend(s.dones);
        buffer.bootstrap.push(s.bootstrap);
        finished.extend(s.finished);
    }
    Ok(Rollout {
        buffer,
        raw_observations: raw,
        finished,
    })
}
