//! Kinematic grasp-and-follow environment.
//!
//! There is no rigid-body simulation. The robot integrates clamped joint
//! deltas directly; the object is static until enough fingertips touch it
//! from opposing sides, after which it moves rigidly with the wrist. When
//! contacts are lost it falls straight down to its starting height.

mod descriptor;
mod trace;

#[cfg(test)]
mod tests;

pub use descriptor::{object_descriptor, DESCRIPTOR_LEN};
pub use trace::{EpisodeTrace, TraceFrame};

use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{JointConfig, KinematicChain};
use crate::retarget::{JointTrajectory, RetargetConfig, RetargetError, RetargetMethod};
use crate::reward::{staged_reward, switch_time, RewardError, RewardInputs, RewardParams};
use crate::trajectory::{DemoTrajectory, ObjectModel};
use crate::transform::{RigidTransform, Vec3};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid env config: {0}")]
    Config(String),
    #[error("demo has {demo} frames but the joint trajectory has {joint}")]
    LengthMismatch { demo: usize, joint: usize },
    #[error("action has {got} entries, robot has {expected} joints")]
    ActionSize { expected: usize, got: usize },
    #[error("action contains a non-finite value")]
    NonFiniteAction,
    #[error("episode already terminated")]
    Terminated,
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Retarget(#[from] RetargetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub dt: f64,
    /// Fingertips within this distance of the surface touch it.
    pub contact_radius: f64,
    pub attach_min_contacts: usize,
    /// Minimum largest angle between contact directions seen from the
    /// object center.
    pub attach_spread_min: f64,
    pub lift_threshold: f64,
    pub drop_distance: f64,
    /// Standard deviation of the frozen per-keypoint detection offsets.
    pub detection_noise: f64,
    /// Number of future frames in the goal block.
    pub horizon: usize,
    pub gravity: f64,
    /// When false the contact slots of the observation are zero.
    pub observe_contacts: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            dt: 0.1,
            contact_radius: 0.006,
            attach_min_contacts: 3,
            attach_spread_min: 1.57,
            lift_threshold: 0.02,
            drop_distance: 0.15,
            detection_noise: 0.005,
            horizon: 5,
            gravity: 9.81,
            observe_contacts: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.to_string()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.contact_radius > 0.0) {
            return bad("contact_radius must be positive");
        }
        if self.attach_min_contacts < 2 || self.attach_min_contacts > 5 {
            return bad("attach_min_contacts must be between 2 and 5");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(self.detection_noise >= 0.0) || !(self.drop_distance > 0.0) || !(self.lift_threshold > 0.0) {
            return bad("noise, drop distance and lift threshold must be non-negative / positive");
        }
        if !(self.gravity >= 0.0) || !self.attach_spread_min.is_finite() {
            return bad("gravity and spread must be finite");
        }
        Ok(())
    }

    /// Observation length for a robot with `dof` joints.
    pub fn observation_len(&self, dof: usize) -> usize {
        DESCRIPTOR_LEN + 7 + dof + 15 + 5 + 18 * self.horizon
    }
}

/// Frozen per-keypoint detection offsets for one episode.
pub fn detection_offsets(seed: u64, count: usize, sigma: f64) -> Vec<Vec3> {
    if sigma == 0.0 {
        return vec![Vec3::zeros(); count];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    (0..count)
        .map(|_| Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect()
}

/// The demo as the detector reports it for episode `seed`.
pub fn noisy_demo(demo: &DemoTrajectory, seed: u64, sigma: f64) -> DemoTrajectory {
    demo.with_keypoint_offsets(&detection_offsets(seed, demo.layout.count, sigma))
}

/// Everything an episode needs besides the demonstration: robot, object
/// geometry (already in the robot's metric space) and settings.
#[derive(Debug, Clone)]
pub struct EnvSpec {
    pub chain: Arc<KinematicChain>,
    pub object: Arc<ObjectModel>,
    pub cfg: EnvConfig,
    pub reward: RewardParams,
    pub alpha: f64,
    pub step_limit: f64,
}

impl EnvSpec {
    /// Retargets the episode's noisy view of `demo`, the same view the
    /// environment observes for that seed.
    pub fn retarget_episode(
        &self,
        retarget: &RetargetConfig,
        method: RetargetMethod,
        demo: &DemoTrajectory,
        q_init: &JointConfig,
        seed: u64,
    ) -> Result<JointTrajectory, EnvError> {
        let seen = noisy_demo(demo, seed, self.cfg.detection_noise);
        Ok(method.run(&self.chain, retarget, &seen, q_init)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub q: JointConfig,
    pub object_pose: RigidTransform,
    pub attached: bool,
    pub contacts: [bool; 5],
    pub t: usize,
    pub terminated: bool,
    /// Object pose in the wrist frame while attached.
    attach_offset: RigidTransform,
    fall_velocity: f64,
    ever_attached: bool,
    detached_after_grasp: bool,
    lifted: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInfo {
    pub attached_now: bool,
    pub detached_now: bool,
    pub lifted_now: bool,
    pub dropped: bool,
    /// Episode ended at the demo end with the object held throughout.
    pub success: bool,
}

pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

pub struct GraspEnv {
    spec: EnvSpec,
    descriptor: [f64; DESCRIPTOR_LEN],
    tips: [usize; 5],
    wrist: usize,
    goal_tips: Vec<[Vec3; 5]>,
    demo_objects: Vec<RigidTransform>,
    primitive: Vec<DVector<f64>>,
    t0: usize,
    support_z: f64,
    state: EnvState,
    trace: Option<EpisodeTrace>,
}

impl GraspEnv {
    /// Starts an episode at the first retargeted configuration with the
    /// object at its first demonstrated pose.
    pub fn reset(
        spec: &EnvSpec,
        demo: &DemoTrajectory,
        joint: &JointTrajectory,
        seed: u64,
    ) -> Result<(GraspEnv, Vec<f64>), EnvError> {
        spec.cfg.validate()?;
        spec.reward.validate()?;
        if demo.len() != joint.len() || demo.is_empty() {
            return Err(EnvError::LengthMismatch {
                demo: demo.len(),
                joint: joint.len(),
            });
        }
        let chain = &spec.chain;
        let tips: [usize; 5] = chain
            .fingertip_indices()
            .try_into()
            .map_err(|_| EnvError::Config("robot needs five fingertip keypoints".into()))?;
        let wrist = chain
            .wrist_index()
            .ok_or_else(|| EnvError::Config("robot needs a wrist keypoint".into()))?;
        let seen = noisy_demo(demo, seed, spec.cfg.detection_noise);
        let goal_tips = (0..seen.len())
            .map(|t| {
                let o = seen.frames[t].object_position();
                seen.fingertips(t).map(|h| (h - o) * spec.alpha + o)
            })
            .collect();
        let demo_objects: Vec<RigidTransform> = demo.frames.iter().map(|f| f.object_pose).collect();
        let t0 = switch_time(demo, &spec.reward)?;
        let state = EnvState {
            q: joint.configs[0].clone(),
            object_pose: demo_objects[0],
            attached: false,
            contacts: [false; 5],
            t: 0,
            terminated: false,
            attach_offset: RigidTransform::identity(),
            fall_velocity: 0.0,
            ever_attached: false,
            detached_after_grasp: false,
            lifted: false,
        };
        let mut env = GraspEnv {
            spec: spec.clone(),
            descriptor: object_descriptor(&spec.object),
            tips,
            wrist,
            goal_tips,
            support_z: demo_objects[0].translation().z,
            demo_objects,
            primitive: joint.primitive_actions.clone(),
            t0,
            state,
            trace: None,
        };
        env.state.contacts = env.contacts(&env.fingertips());
        let obs = env.observe();
        Ok((env, obs))
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.demo_objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demo_objects.is_empty()
    }

    pub fn switch_time(&self) -> usize {
        self.t0
    }

    /// Whether the object has been grasped and lifted at some point.
    pub fn grasped(&self) -> bool {
        self.state.ever_attached && self.state.lifted
    }

    /// Primitive action that moves the robot to the next demo frame.
    pub fn primitive_action(&self) -> DVector<f64> {
        let t = (self.state.t + 1).min(self.primitive.len() - 1);
        self.primitive[t].clone()
    }

    /// Starts recording an episode trace, beginning with the current frame.
    pub fn record_trace(&mut self) {
        let mut trace = EpisodeTrace {
            demo_len: self.len(),
            support_z: self.support_z,
            frames: Vec::new(),
        };
        trace.push(&self.state, 0.0, StepInfo::default());
        self.trace = Some(trace);
    }

    pub fn take_trace(&mut self) -> Option<EpisodeTrace> {
        self.trace.take()
    }

    fn fingertips(&self) -> [Vec3; 5] {
        let f = self.spec.chain.frames(&self.state.q).expect("config has chain dof");
        self.tips.map(|k| f.keypoint_position(k))
    }

    /// A tip touches a free object when it lies within `contact_radius` of
    /// the surface on either side; a held object is also touched by tips
    /// pressed deeper into it.
    fn contacts(&self, tips: &[Vec3; 5]) -> [bool; 5] {
        let inv = self.state.object_pose.inverse();
        let r = self.spec.cfg.contact_radius;
        let held = self.state.attached;
        tips.map(|p| {
            let sd = self.spec.object.signed_distance(&inv.transform_point(&p));
            sd <= r && (held || sd >= -r)
        })
    }

    /// Largest angle between contact directions around the object center.
    fn contact_spread(&self, tips: &[Vec3; 5], contacts: &[bool; 5]) -> f64 {
        let c = self.state.object_pose.translation();
        let dirs: Vec<Vec3> = (0..5)
            .filter(|&m| contacts[m])
            .filter_map(|m| (tips[m] - c).try_normalize(1e-12))
            .collect();
        let mut best: f64 = 0.0;
        for i in 0..dirs.len() {
            for j in i + 1..dirs.len() {
                best = best.max(dirs[i].dot(&dirs[j]).clamp(-1.0, 1.0).acos());
            }
        }
        best
    }

    /// Applies a joint-delta action: its norm is clamped to the step limit
    /// and the result to the joint limits.
    pub fn step(&mut self, action: &DVector<f64>) -> Result<StepOutcome, EnvError> {
        let dof = self.spec.chain.dof();
        if action.len() != dof {
            return Err(EnvError::ActionSize {
                expected: dof,
                got: action.len(),
            });
        }
        if action.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::NonFiniteAction);
        }
        if self.state.terminated {
            return Err(EnvError::Terminated);
        }
        let cfg = self.spec.cfg;
        let d = self.spec.step_limit;
        let n = action.norm();
        let delta = if n > d { action * (d / n) } else { action.clone() };
        let mut q = JointConfig(&self.state.q.0 + delta);
        self.spec.chain.clamp_to_limits(&mut q);
        self.state.q = q;
        self.state.t += 1;
        let t = self.state.t;
        let mut info = StepInfo::default();

        let frames = self.spec.chain.frames(&self.state.q).expect("config has chain dof");
        let wrist_pose = frames.keypoint_pose(self.wrist);
        let tips = self.tips.map(|k| frames.keypoint_position(k));
        if self.state.attached {
            self.state.object_pose = wrist_pose.compose(&self.state.attach_offset);
        } else {
            let mut p = *self.state.object_pose.translation();
            if p.z > self.support_z || self.state.fall_velocity != 0.0 {
                p.z += self.state.fall_velocity * cfg.dt - 0.5 * cfg.gravity * cfg.dt * cfg.dt;
                self.state.fall_velocity -= cfg.gravity * cfg.dt;
                if p.z <= self.support_z {
                    p.z = self.support_z;
                    self.state.fall_velocity = 0.0;
                }
                self.state.object_pose = RigidTransform::new(*self.state.object_pose.rotation(), p);
            }
        }

        let contacts = self.contacts(&tips);
        let count = contacts.iter().filter(|&&c| c).count();
        self.state.contacts = contacts;
        if self.state.attached {
            if count < cfg.attach_min_contacts {
                self.state.attached = false;
                self.state.fall_velocity = 0.0;
                self.state.detached_after_grasp = true;
                info.detached_now = true;
            }
        } else if count >= cfg.attach_min_contacts && self.contact_spread(&tips, &contacts) >= cfg.attach_spread_min {
            self.state.attached = true;
            self.state.ever_attached = true;
            self.state.attach_offset = wrist_pose.inverse().compose(&self.state.object_pose);
            info.attached_now = true;
        }

        let o = *self.state.object_pose.translation();
        if !self.state.lifted && self.state.ever_attached && o.z >= self.support_z + cfg.lift_threshold {
            self.state.lifted = true;
            info.lifted_now = true;
        }
        let demo_o = *self.demo_objects[t].translation();
        let last = self.len() - 1;
        if (o - demo_o).norm() > cfg.drop_distance {
            info.dropped = true;
            self.state.terminated = true;
        } else if t >= last {
            self.state.terminated = true;
            info.success = self.grasped() && self.state.attached && !self.state.detached_after_grasp;
        }
        let inputs = RewardInputs {
            fingertips: tips,
            demo_fingertips: self.goal_tips[t],
            object: o,
            demo_object: demo_o,
            success_terminal: info.success,
        };
        let reward = staged_reward(&inputs, t, self.t0, &self.spec.reward);
        if let Some(trace) = &mut self.trace {
            trace.push(&self.state, reward, info);
        }
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            done: self.state.terminated,
            info,
        })
    }

    /// Flattened observation:
    /// `[descriptor | object xyz | object wxyz | q | tips - object (5x3) |
    /// contacts (5) | goal tips for frames t..t+h-1 (h x 5x3) |
    /// goal object for frames t+1..t+h minus current object (h x 3)]`.
    /// Frames past the demo end repeat its final frame.
    pub fn observe(&self) -> Vec<f64> {
        let cfg = &self.spec.cfg;
        let mut obs = Vec::with_capacity(cfg.observation_len(self.spec.chain.dof()));
        obs.extend_from_slice(&self.descriptor);
        let o = *self.state.object_pose.translation();
        obs.extend_from_slice(&self.state.object_pose.xyz());
        obs.extend_from_slice(&self.state.object_pose.wxyz());
        obs.extend_from_slice(self.state.q.as_slice());
        for p in self.fingertips() {
            obs.extend((p - o).iter());
        }
        for c in self.state.contacts {
            obs.push(if cfg.observe_contacts && c { 1.0 } else { 0.0 });
        }
        let last = self.len() - 1;
        let t = self.state.t;
        for k in 0..cfg.horizon {
            for h in &self.goal_tips[(t + k).min(last)] {
                obs.extend(h.iter());
            }
        }
        for k in 1..=cfg.horizon {
            let g = self.demo_objects[(t + k).min(last)].translation() - o;
            obs.extend(g.iter());
        }
        obs
    }
}
