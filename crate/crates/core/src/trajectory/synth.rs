//! Scripted reach / close / lift / follow demonstrations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hand_model::{closure_angles, human_hand_chain, RING_DROP, WRIST_DOF};
use super::{DemoFrame, DemoTrajectory, HandLayout, ObjectShape, TrajectoryError};
use crate::kinematics::{JointConfig, KinematicChain};
use crate::transform::{RigidTransform, Vec3};

/// Parameters of one synthetic demonstration. Lengths are in the human
/// hand's (unscaled) metric space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub object_id: String,
    pub shape: ObjectShape,
    /// Object start position in the plane; height follows from the shape.
    pub object_position: [f64; 2],
    pub hand_yaw: f64,
    /// Objects farther than this from the base origin cannot be reached.
    pub reach_radius: f64,
    pub dt: f64,
    pub reach_frames: usize,
    pub close_frames: usize,
    pub lift_frames: usize,
    pub follow_frames: usize,
    pub lift_height: f64,
    pub follow_offset: [f64; 3],
    pub follow_yaw: f64,
    /// Wrist start relative to the grasp pose, in the hand yaw frame.
    pub start_offset: [f64; 3],
    /// Max random rotation (radians) of the approach direction.
    pub approach_jitter: f64,
    /// Target fingertip distance from the surface when closed.
    pub grasp_gap: f64,
    /// Height of the knuckle ring above the object top at the grasp.
    pub grasp_clearance: f64,
    pub max_wrist_step: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            object_id: "sphere".into(),
            shape: ObjectShape::Sphere { radius: 0.035 },
            object_position: [0.45, 0.0],
            hand_yaw: 0.0,
            reach_radius: 0.8,
            dt: 0.1,
            reach_frames: 15,
            close_frames: 20,
            lift_frames: 10,
            follow_frames: 15,
            lift_height: 0.08,
            follow_offset: [0.06, 0.08, 0.04],
            follow_yaw: 0.3,
            start_offset: [-0.03, 0.0, 0.15],
            approach_jitter: 0.35,
            grasp_gap: 0.003,
            grasp_clearance: 0.04,
            max_wrist_step: 0.02,
        }
    }
}

impl SynthSpec {
    fn check(&self) -> Result<(), TrajectoryError> {
        let bad = |field: &str, message: String| {
            Err(TrajectoryError::InfeasibleSpec {
                field: field.into(),
                message,
            })
        };
        if !self.shape.is_valid() {
            return bad("shape", "shape dimensions must be positive".into());
        }
        let [x, y] = self.object_position;
        let dist = (x * x + y * y).sqrt();
        if !(dist <= self.reach_radius) {
            return bad(
                "object_position",
                format!("object at distance {dist:.3} m is outside reach radius {}", self.reach_radius),
            );
        }
        for (name, v) in [
            ("reach_frames", self.reach_frames),
            ("close_frames", self.close_frames),
            ("lift_frames", self.lift_frames),
        ] {
            if v == 0 {
                return bad(name, "duration must be positive".into());
            }
        }
        if !(self.dt > 0.0) {
            return bad("dt", "must be positive".into());
        }
        if !(self.lift_height >= 0.05) {
            return bad("lift_height", "lift must be at least 0.05 m".into());
        }
        let follow = Vec3::from(self.follow_offset).norm();
        if !(follow <= 0.5) || !self.follow_yaw.is_finite() || self.follow_yaw.abs() > std::f64::consts::PI {
            return bad("follow_offset", "follow path must stay within 0.5 m and half a turn".into());
        }
        if !(self.max_wrist_step > 0.0) {
            return bad("max_wrist_step", "must be positive".into());
        }
        Ok(())
    }
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Generates a demonstration: the hand approaches with fingers open,
/// closes each finger until its tip is `grasp_gap` from the surface, lifts
/// the object and carries it along the follow path.
pub fn synth_demo(spec: &SynthSpec, seed: u64) -> Result<DemoTrajectory, TrajectoryError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain = human_hand_chain();
    let jitter = |rng: &mut ChaCha8Rng, a: f64| if a > 0.0 { rng.random_range(-a..a) } else { 0.0 };

    let approach = jitter(&mut rng, spec.approach_jitter);
    let height_scale = 1.0 + jitter(&mut rng, 0.2);
    let yaw = spec.hand_yaw + jitter(&mut rng, 0.15);
    let follow_scale = 1.0 + jitter(&mut rng, 0.2);
    let follow_yaw = spec.follow_yaw * (1.0 + jitter(&mut rng, 0.2));

    let object0 = Vec3::new(spec.object_position[0], spec.object_position[1], spec.shape.rest_height());
    let object_pose0 = RigidTransform::from_translation(object0);
    let top = match spec.shape {
        ObjectShape::Sphere { radius } => radius,
        ObjectShape::Box { half_extents } => half_extents[2],
        ObjectShape::Cylinder { half_height, .. } => half_height,
    };
    let grasp_wrist = object0 + Vec3::new(0.0, 0.0, top + RING_DROP + spec.grasp_clearance);
    let [sx, sy, sz] = spec.start_offset;
    let start_dir = RigidTransform::from_axis_angle(&Vec3::z(), yaw + approach)
        .transform_vector(&Vec3::new(sx, sy, sz * height_scale));
    let start_wrist = grasp_wrist + start_dir;

    let closures = grasp_closures(&chain, spec, &grasp_wrist, yaw, &object0);

    let r = spec.reach_frames;
    let c = spec.close_frames;
    let l = spec.lift_frames;
    let f = spec.follow_frames;
    let total = r + c + l + f + 1;
    let follow = Vec3::from(spec.follow_offset) * follow_scale;

    let mut frames = Vec::with_capacity(total);
    for i in 0..total {
        let (wrist, wrist_yaw, closure_u) = if i < r {
            let u = smoothstep(i as f64 / r as f64);
            (start_wrist + (grasp_wrist - start_wrist) * u, yaw, 0.0)
        } else if i <= r + c {
            (grasp_wrist, yaw, smoothstep((i - r) as f64 / c as f64))
        } else if i <= r + c + l {
            // brisk start once the grasp is closed, settling at the top
            let u = ((i - r - c) as f64 / l as f64 * std::f64::consts::FRAC_PI_2).sin();
            (grasp_wrist + Vec3::new(0.0, 0.0, spec.lift_height * u), yaw, 1.0)
        } else {
            let u = smoothstep((i - r - c - l) as f64 / f as f64);
            let lifted = grasp_wrist + Vec3::new(0.0, 0.0, spec.lift_height);
            (lifted + follow * u, yaw + follow_yaw * u, 1.0)
        };
        let mut q = JointConfig::zeros(chain.dof());
        q.0[0] = wrist.x;
        q.0[1] = wrist.y;
        q.0[2] = wrist.z;
        q.0[3] = wrist_yaw;
        for (m, s) in closures.iter().enumerate() {
            let angles = closure_angles(s * closure_u);
            for k in 0..3 {
                q.0[WRIST_DOF + 3 * m + k] = angles[k];
            }
        }
        let fr = chain.frames(&q).expect("hand config has chain dof");
        let hand_keypoints = (0..chain.keypoints().len()).map(|k| fr.keypoint_position(k)).collect();
        let wrist_pose = fr.keypoint_pose(chain.wrist_index().unwrap());
        let object_pose = if i <= r + c {
            object_pose0
        } else {
            // carried rigidly with the wrist from the end of the closing phase
            let grasp_pose = RigidTransform::new(
                *RigidTransform::from_axis_angle(&Vec3::z(), yaw).rotation(),
                grasp_wrist,
            );
            wrist_pose.compose(&grasp_pose.inverse()).compose(&object_pose0)
        };
        frames.push(DemoFrame {
            hand_keypoints,
            wrist_pose,
            object_pose,
        });
    }

    let mut traj = DemoTrajectory {
        frames,
        dt: spec.dt,
        lift_index: None,
        object_ref: spec.object_id.clone(),
        layout: HandLayout::STANDARD_21,
    };
    traj = enforce_step_cap(&traj, spec.max_wrist_step);
    traj.lift_index = traj.detect_lift_index();
    Ok(traj)
}

/// Per-finger closure in `[0, 1]` bringing each tip to `grasp_gap` from the
/// surface (first crossing while closing), or the closest approach when the
/// gap is never reached.
fn grasp_closures(
    chain: &KinematicChain,
    spec: &SynthSpec,
    wrist: &Vec3,
    yaw: f64,
    object: &Vec3,
) -> [f64; 5] {
    let tip_distance = |m: usize, s: f64| {
        let mut q = JointConfig::zeros(chain.dof());
        q.0[0] = wrist.x;
        q.0[1] = wrist.y;
        q.0[2] = wrist.z;
        q.0[3] = yaw;
        let a = closure_angles(s);
        for k in 0..3 {
            q.0[WRIST_DOF + 3 * m + k] = a[k];
        }
        let tip = chain.frames(&q).unwrap().keypoint_position(HandLayout::STANDARD_21.fingertips[m]);
        spec.shape.signed_distance(&(tip - object))
    };
    let mut out = [1.0; 5];
    for (m, slot) in out.iter_mut().enumerate() {
        let steps = 200;
        let mut prev = 0.0;
        let mut best = (f64::INFINITY, 1.0);
        let mut found = None;
        for i in 0..=steps {
            let s = i as f64 / steps as f64;
            let d = tip_distance(m, s) - spec.grasp_gap;
            if d.abs() < best.0 {
                best = (d.abs(), s);
            }
            if d <= 0.0 {
                found = Some((prev, s));
                break;
            }
            prev = s;
        }
        *slot = match found {
            Some((mut lo, mut hi)) if hi > 0.0 => {
                for _ in 0..50 {
                    let mid = 0.5 * (lo + hi);
                    if tip_distance(m, mid) - spec.grasp_gap > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
            Some(_) => 0.0,
            None => best.1,
        };
    }
    out
}

/// Inserts linearly interpolated frames wherever the wrist moves more than
/// `cap` meters between consecutive frames. The lift index is recomputed.
pub fn enforce_step_cap(traj: &DemoTrajectory, cap: f64) -> DemoTrajectory {
    let mut frames: Vec<DemoFrame> = Vec::with_capacity(traj.frames.len());
    for (i, f) in traj.frames.iter().enumerate() {
        if i > 0 {
            let prev = &traj.frames[i - 1];
            let d = (f.wrist_pose.translation() - prev.wrist_pose.translation()).norm();
            let pieces = (d / cap).ceil() as usize;
            for k in 1..pieces {
                let u = k as f64 / pieces as f64;
                frames.push(interpolate(prev, f, u));
            }
        }
        frames.push(f.clone());
    }
    let mut out = DemoTrajectory {
        frames,
        ..traj.clone()
    };
    if traj.lift_index.is_some() || out.frames.len() != traj.frames.len() {
        out.lift_index = out.detect_lift_index().or(traj.lift_index);
    }
    out
}

fn interpolate(a: &DemoFrame, b: &DemoFrame, u: f64) -> DemoFrame {
    let pose = |x: &RigidTransform, y: &RigidTransform| {
        let rot = x.rotation().slerp(y.rotation(), u);
        RigidTransform::new(rot, x.translation() + (y.translation() - x.translation()) * u)
    };
    DemoFrame {
        hand_keypoints: a
            .hand_keypoints
            .iter()
            .zip(&b.hand_keypoints)
            .map(|(p, q)| p + (q - p) * u)
            .collect(),
        wrist_pose: pose(&a.wrist_pose, &b.wrist_pose),
        object_pose: pose(&a.object_pose, &b.object_pose),
    }
}
