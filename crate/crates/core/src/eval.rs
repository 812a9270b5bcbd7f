//! Episode judging, success rates and tracking errors, and side-by-side
//! comparison of actors.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvConfig, EpisodeTrace, GraspEnv};
use crate::policy::{compose_action, Policy};
use crate::retarget::RetargetMethod;
use crate::reward::{switch_time, RewardParams};
use crate::task::{Task, TaskError};
use crate::trajectory::DemoTrajectory;
use crate::transform::quaternion_angle;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trace is truncated: {0}")]
    Truncated(String),
    #[error("nothing to evaluate: {0}")]
    Empty(String),
    #[error("demo {demo}, seed {seed}: {message}")]
    Episode { demo: usize, seed: u64, message: String },
    #[error("demo has no lift index")]
    MissingLiftIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub grasped: bool,
    pub followed: bool,
    /// `|demo object - object|` for every frame from the switch time on.
    pub position_errors: Vec<f64>,
    /// Geodesic angle between demo and actual object orientation, same frames.
    pub rotation_errors: Vec<f64>,
}

/// Grasped: attached and then raised by the lift threshold. Followed:
/// grasped, never detached or dropped afterwards, within the drop distance
/// of the demo object path from the lift index to the demo end.
pub fn judge_episode(
    trace: &EpisodeTrace,
    demo: &DemoTrajectory,
    cfg: &EnvConfig,
    reward: &RewardParams,
) -> Result<EpisodeOutcome, EvalError> {
    let frames = &trace.frames;
    if trace.demo_len != demo.len() {
        return Err(EvalError::Truncated(format!(
            "trace recorded for {} demo frames, demo has {}",
            trace.demo_len,
            demo.len()
        )));
    }
    let last = frames.last().ok_or_else(|| EvalError::Truncated("no frames".into()))?;
    if frames.iter().enumerate().any(|(i, f)| f.t != i) {
        return Err(EvalError::Truncated("frame indices are not consecutive from 0".into()));
    }
    if last.t + 1 != demo.len() && !last.dropped {
        return Err(EvalError::Truncated(format!(
            "ends at frame {} of {} without termination",
            last.t,
            demo.len()
        )));
    }
    let lift = demo.lift_index.ok_or(EvalError::MissingLiftIndex)?;
    let t0 = switch_time(demo, reward).map_err(|_| EvalError::MissingLiftIndex)?;

    let attach = frames.iter().position(|f| f.attached);
    let grasped = attach.is_some_and(|a| {
        frames[a..]
            .iter()
            .any(|f| f.object_pose.xyz[2] >= trace.support_z + cfg.lift_threshold)
    });
    let followed = grasped && {
        let a = attach.expect("grasped implies attached");
        let held = frames[a..].iter().all(|f| f.attached && !f.detached_now && !f.dropped);
        let on_path = frames.iter().filter(|f| f.t >= lift).all(|f| {
            let d = nalgebra::Vector3::from(f.object_pose.xyz) - demo.frames[f.t].object_position();
            d.norm() <= cfg.drop_distance
        });
        held && on_path && last.t + 1 == demo.len()
    };

    let mut position_errors = Vec::new();
    let mut rotation_errors = Vec::new();
    for f in frames.iter().filter(|f| f.t >= t0) {
        let pose = f
            .object_pose
            .to_transform()
            .ok_or_else(|| EvalError::Truncated(format!("frame {} has an invalid object pose", f.t)))?;
        let target = &demo.frames[f.t].object_pose;
        position_errors.push((target.translation() - pose.translation()).norm());
        rotation_errors.push(quaternion_angle(target.rotation(), pose.rotation()));
    }
    Ok(EpisodeOutcome {
        grasped,
        followed,
        position_errors,
        rotation_errors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectStats {
    pub episodes: usize,
    pub sr_grasp: f64,
    pub sr_follow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub sr_grasp: f64,
    pub sr_follow: f64,
    /// Mean position error over followed episodes; `None` if there are none.
    pub e_p: Option<f64>,
    pub e_r: Option<f64>,
    pub per_object: BTreeMap<String, ObjectStats>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl EvalReport {
    /// Aggregates outcomes in the given order; errors are the mean of each
    /// followed episode's per-frame mean.
    pub fn from_outcomes(outcomes: &[(String, EpisodeOutcome)]) -> EvalReport {
        let n = outcomes.len();
        let grasp = outcomes.iter().filter(|(_, o)| o.grasped).count();
        let follow: Vec<&EpisodeOutcome> = outcomes.iter().map(|(_, o)| o).filter(|o| o.followed).collect();
        let e_p: Vec<f64> = follow.iter().map(|o| mean(&o.position_errors)).collect();
        let e_r: Vec<f64> = follow.iter().map(|o| mean(&o.rotation_errors)).collect();
        let mut per_object: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
        for (id, o) in outcomes {
            let e = per_object.entry(id.clone()).or_default();
            e.0 += 1;
            e.1 += o.grasped as usize;
            e.2 += o.followed as usize;
        }
        let frac = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        EvalReport {
            episodes: n,
            sr_grasp: frac(grasp, n),
            sr_follow: frac(follow.len(), n),
            e_p: (!e_p.is_empty()).then(|| mean(&e_p)),
            e_r: (!e_r.is_empty()).then(|| mean(&e_r)),
            per_object: per_object
                .into_iter()
                .map(|(id, (n, g, f))| {
                    (
                        id,
                        ObjectStats {
                            episodes: n,
                            sr_grasp: frac(g, n),
                            sr_follow: frac(f, n),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Tab-separated summary plus one row per object.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("scope\tepisodes\tsr_grasp\tsr_follow\te_p\te_r\n");
        let _ = writeln!(
            s,
            "all\t{}\t{:.6}\t{:.6}\t{}\t{}",
            self.episodes,
            self.sr_grasp,
            self.sr_follow,
            fmt_opt(self.e_p),
            fmt_opt(self.e_r)
        );
        for (id, o) in &self.per_object {
            let _ = writeln!(s, "{id}\t{}\t{:.6}\t{:.6}\t-\t-", o.episodes, o.sr_grasp, o.sr_follow);
        }
        s
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

/// Who picks the actions in an evaluation episode.
#[derive(Debug, Clone, Copy)]
pub enum Actor<'a> {
    /// Retargeted primitives plus the policy's mean residual.
    Residual(&'a Policy),
    /// Open-loop replay of a retargeting method's primitives.
    Replay(RetargetMethod),
    /// Holds the first configuration; never closes the hand.
    Idle,
}

impl Actor<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Actor::Residual(_) => "residual",
            Actor::Replay(m) => m.name(),
            Actor::Idle => "idle",
        }
    }
}

/// Noise seed of episode `index` under evaluation seed `seed`.
pub fn episode_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng.random()
}

/// Runs one episode of demo `demo` and judges it.
pub fn run_episode(actor: &Actor, task: &Task, demo: usize, noise_seed: u64) -> Result<(EpisodeTrace, EpisodeOutcome), EvalError> {
    let wrap = |message: String| EvalError::Episode {
        demo,
        seed: noise_seed,
        message,
    };
    let (task, method, use_prim) = match actor {
        Actor::Residual(p) => (p.config.ablations.apply(task), RetargetMethod::Position, p.config.ablations.use_prim_actions),
        Actor::Replay(m) => (task.clone(), *m, true),
        Actor::Idle => (task.clone(), RetargetMethod::Position, false),
    };
    let ep = task
        .episode(demo, None, method, noise_seed)
        .map_err(|e: TaskError| wrap(e.to_string()))?;
    let (mut env, mut obs) = GraspEnv::reset(&ep.spec, &ep.demo, &ep.joints, noise_seed).map_err(|e| wrap(e.to_string()))?;
    env.record_trace();
    let dof = task.chain.dof();
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    while !env.state().terminated {
        let prim = if use_prim { env.primitive_action() } else { DVector::zeros(dof) };
        let action = match actor {
            Actor::Residual(p) => {
                let a = p.act(&obs, true, &mut rng).map_err(|e| wrap(e.to_string()))?;
                compose_action(&prim, &a.residual).map_err(|e| wrap(e.to_string()))?
            }
            _ => prim,
        };
        obs = env.step(&action).map_err(|e| wrap(e.to_string()))?.observation;
    }
    let trace = env.take_trace().expect("trace was recording");
    let outcome = judge_episode(&trace, &ep.demo, &task.env, &task.reward)?;
    Ok((trace, outcome))
}

/// Every demo under every seed, in parallel; results aggregated in
/// (seed, demo) order.
pub fn evaluate(actor: &Actor, task: &Task, seeds: &[u64]) -> Result<EvalReport, EvalError> {
    if seeds.is_empty() || task.demos.is_empty() {
        return Err(EvalError::Empty("need at least one seed and one demo".into()));
    }
    let jobs: Vec<(u64, usize)> = seeds.iter().flat_map(|&s| (0..task.demos.len()).map(move |d| (s, d))).collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(s, d)| {
            let (_, o) = run_episode(actor, task, d, episode_seed(s, d))?;
            Ok((task.demos[d].object.id.clone(), o))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvalReport::from_outcomes(&outcomes))
}

/// Reports for several actors under identical seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<(String, EvalReport)>,
}

impl Comparison {
    /// `Method | SR_Grasp | SR_Follow | E_p | E_r` with percentages.
    pub fn render(&self) -> String {
        let mut s = String::from("method\tsr_grasp\tsr_follow\te_p\te_r\n");
        for (name, r) in &self.rows {
            let _ = writeln!(
                s,
                "{name}\t{:.1}%\t{:.1}%\t{}\t{}",
                100.0 * r.sr_grasp,
                100.0 * r.sr_follow,
                fmt_opt(r.e_p),
                fmt_opt(r.e_r)
            );
        }
        s
    }
}

pub fn compare(actors: &[Actor], task: &Task, seeds: &[u64]) -> Result<Comparison, EvalError> {
    let rows = actors
        .iter()
        .map(|a| Ok((a.name().to_string(), evaluate(a, task, seeds)?)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(Comparison { rows })
}

#[cfg(test)]
mod tests;
