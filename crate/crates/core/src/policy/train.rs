use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ppo::Optimizer;
use super::rollout::FinishedEpisode;
use super::{collect_rollouts, compute_advantages, ppo_update, Policy, PolicyConfig, PolicyError, RolloutWorker, UpdateStats};
use crate::eval::{evaluate, Actor};
use crate::task::Task;

/// One line of the training curve. Success rates and errors come from the
/// evaluation task when one is given, otherwise from the training
/// episodes finished since the previous row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: usize,
    /// Mean return of training episodes finished since the previous row.
    pub mean_reward: Option<f64>,
    pub sr_grasp: f64,
    pub sr_follow: f64,
    pub e_p: Option<f64>,
    pub e_r: Option<f64>,
}

impl CurveRow {
    pub fn header() -> &'static str {
        "step\tmean_reward\tsr_grasp\tsr_follow\te_p\te_r"
    }

    pub fn tsv(rows: &[CurveRow]) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        let mut s = format!("{}\n", Self::header());
        for r in rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{:.6}\t{:.6}\t{}\t{}",
                r.step,
                f(r.mean_reward),
                r.sr_grasp,
                r.sr_follow,
                f(r.e_p),
                f(r.e_r)
            );
        }
        s
    }
}

/// Periodic evaluation: every demo of `task` under every seed.
pub struct EvalPlan<'a> {
    pub task: &'a Task,
    pub seeds: Vec<u64>,
}

pub struct TrainOutput {
    pub initial: Policy,
    pub policy: Policy,
    pub curve: Vec<CurveRow>,
    /// Highest SR_Follow row (earliest on ties) and the policy at that row.
    pub best: (CurveRow, Policy),
    pub updates: Vec<UpdateStats>,
    pub steps: usize,
}

fn row(
    step: usize,
    policy: &Policy,
    eval: Option<&EvalPlan>,
    finished: &[FinishedEpisode],
) -> Result<CurveRow, PolicyError> {
    let mean_reward =
        (!finished.is_empty()).then(|| finished.iter().map(|e| e.episode_return).sum::<f64>() / finished.len() as f64);
    if let Some(plan) = eval {
        let r = evaluate(&Actor::Residual(policy), plan.task, &plan.seeds)?;
        return Ok(CurveRow {
            step,
            mean_reward,
            sr_grasp: r.sr_grasp,
            sr_follow: r.sr_follow,
            e_p: r.e_p,
            e_r: r.e_r,
        });
    }
    let n = finished.len().max(1) as f64;
    Ok(CurveRow {
        step,
        mean_reward,
        sr_grasp: finished.iter().filter(|e| e.grasped).count() as f64 / n,
        sr_follow: finished.iter().filter(|e| e.success).count() as f64 / n,
        e_p: None,
        e_r: None,
    })
}

/// Trains a residual policy on `task` for `config.iterations()` rounds of
/// collection and clipped-surrogate updates. Deterministic in `seed`
/// regardless of thread count.
pub fn train(config: &PolicyConfig, task: &Task, eval: Option<&EvalPlan>, seed: u64) -> Result<TrainOutput, PolicyError> {
    config.validate()?;
    let task = config.ablations.apply(task);
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut update_rng = ChaCha8Rng::seed_from_u64(seed);
    update_rng.set_stream(u64::MAX);
    let scales = config.residual_scales(&task.chain);
    let mut policy = Policy::new(config, task.observation_len(), scales, &mut init_rng)?;
    let initial = policy.clone();
    let mut optim = Optimizer::new(&policy);

    let first = row(0, &policy, eval, &[])?;
    let mut best = (first.clone(), policy.clone());
    let mut curve = vec![first];
    let iterations = config.iterations();
    let mut workers = Vec::new();
    if iterations > 0 {
        for i in 0..config.num_envs {
            workers.push(RolloutWorker::new(&task, seed, i)?);
        }
    }
    let mut updates = Vec::with_capacity(iterations);
    let mut finished = Vec::new();
    let mut steps = 0;
    for it in 0..iterations {
        let mut rollout = collect_rollouts(&policy, &mut workers, &task, config.rollout_length)?;
        steps += config.batch_steps();
        compute_advantages(&mut rollout.buffer, config.discount, config.gae_lambda)?;
        updates.push(ppo_update(&mut policy, &mut optim, &rollout.buffer, &mut update_rng)?);
        policy.normalizer.update(&rollout.raw_observations);
        finished.extend(rollout.finished);
        if (it + 1) % config.eval_interval == 0 || it + 1 == iterations {
            let r = row(steps, &policy, eval, &finished)?;
            finished.clear();
            if r.sr_follow > best.0.sr_follow {
                best = (r.clone(), policy.clone());
            }
            curve.push(r);
        }
    }
    Ok(TrainOutput {
        initial,
        policy,
        curve,
        best,
        updates,
        steps,
    })
}
