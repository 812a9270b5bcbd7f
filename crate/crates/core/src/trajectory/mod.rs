//! Demonstration data: human hand keypoints and object poses over time.

mod augment;
mod hand_model;
mod io;
mod object;
mod synth;

pub use augment::{augment, sample_augmentations, Workspace, WorkspaceTransform};
pub use hand_model::{closure_angles, human_hand_chain, HUMAN_FINGERS, OPEN_SPLAY, RING_DROP, RING_RADIUS};
pub use io::{
    load_object_model, load_trajectory, object_model_from_json, object_model_to_json,
    save_object_model, save_trajectory, trajectory_from_json, trajectory_to_json,
};
pub use object::{ObjectModel, ObjectShape};
pub use synth::{enforce_step_cap, synth_demo, SynthSpec};

use thiserror::Error;

use crate::transform::{RigidTransform, Vec3};

/// Object rise (meters) above its starting height that counts as lifted.
pub const LIFT_THRESHOLD: f64 = 0.02;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("non-finite value at `{path}`")]
    NonFinite { path: String },
    #[error("invalid trajectory: {0}")]
    Invalid(String),
    #[error("infeasible synthesis spec field `{field}`: {message}")]
    InfeasibleSpec { field: String, message: String },
    #[error("empty workspace: {0}")]
    EmptyWorkspace(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl TrajectoryError {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        TrajectoryError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Index layout of the hand keypoint array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HandLayout {
    pub version: u32,
    pub count: usize,
    pub wrist: usize,
    pub fingertips: [usize; 5],
}

impl HandLayout {
    /// Wrist followed by four points per finger (base knuckle to tip),
    /// thumb first.
    pub const STANDARD_21: HandLayout = HandLayout {
        version: 1,
        count: 21,
        wrist: 0,
        fingertips: [4, 8, 12, 16, 20],
    };

    pub fn from_version(version: u32) -> Option<HandLayout> {
        match version {
            1 => Some(Self::STANDARD_21),
            _ => None,
        }
    }

    /// Base knuckle index of finger `m` in the standard layout.
    pub fn knuckle(&self, m: usize) -> usize {
        self.fingertips[m] - 3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoFrame {
    pub hand_keypoints: Vec<Vec3>,
    pub wrist_pose: RigidTransform,
    pub object_pose: RigidTransform,
}

impl DemoFrame {
    pub fn object_position(&self) -> Vec3 {
        *self.object_pose.translation()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoTrajectory {
    pub frames: Vec<DemoFrame>,
    pub dt: f64,
    pub lift_index: Option<usize>,
    pub object_ref: String,
    pub layout: HandLayout,
}

impl DemoTrajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if self.frames.is_empty() {
            return Err(TrajectoryError::Invalid("no frames".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(TrajectoryError::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(l) = self.lift_index {
            if l >= self.frames.len() {
                return Err(TrajectoryError::Invalid(format!(
                    "lift_index {l} outside {} frames",
                    self.frames.len()
                )));
            }
        }
        if self.layout.count < 6 {
            return Err(TrajectoryError::Invalid("fewer than 6 hand keypoints".into()));
        }
        for (t, f) in self.frames.iter().enumerate() {
            if f.hand_keypoints.len() != self.layout.count {
                return Err(TrajectoryError::Invalid(format!(
                    "frame {t} has {} hand keypoints, layout expects {}",
                    f.hand_keypoints.len(),
                    self.layout.count
                )));
            }
            let finite = f.hand_keypoints.iter().all(|p| p.iter().all(|v| v.is_finite()))
                && f.wrist_pose.xyz().iter().chain(f.wrist_pose.wxyz().iter()).all(|v| v.is_finite())
                && f.object_pose.xyz().iter().chain(f.object_pose.wxyz().iter()).all(|v| v.is_finite());
            if !finite {
                return Err(TrajectoryError::NonFinite {
                    path: format!("frames[{t}]"),
                });
            }
        }
        Ok(())
    }

    /// First frame where the object rises more than [`LIFT_THRESHOLD`].
    pub fn detect_lift_index(&self) -> Option<usize> {
        let z0 = self.frames.first()?.object_pose.translation().z;
        self.frames
            .iter()
            .position(|f| f.object_pose.translation().z > z0 + LIFT_THRESHOLD)
    }

    pub fn fingertips(&self, t: usize) -> [Vec3; 5] {
        let f = &self.frames[t];
        self.layout.fingertips.map(|i| f.hand_keypoints[i])
    }

    /// Copy with a fixed offset added to every hand keypoint (per index).
    pub fn with_keypoint_offsets(&self, offsets: &[Vec3]) -> DemoTrajectory {
        let mut out = self.clone();
        for f in &mut out.frames {
            for (p, o) in f.hand_keypoints.iter_mut().zip(offsets) {
                *p += o;
            }
        }
        out
    }
}
