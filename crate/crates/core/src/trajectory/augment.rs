use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DemoTrajectory, TrajectoryError};
use crate::transform::{RigidTransform, Vec3};

/// Rotation about the gravity axis (+z) by `yaw`, followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceTransform {
    pub yaw: f64,
    pub translation: [f64; 3],
}

impl WorkspaceTransform {
    pub fn identity() -> Self {
        WorkspaceTransform {
            yaw: 0.0,
            translation: [0.0; 3],
        }
    }

    pub fn to_rigid(&self) -> RigidTransform {
        let mut t = RigidTransform::from_axis_angle(&Vec3::z(), self.yaw);
        t = RigidTransform::new(*t.rotation(), Vec3::from(self.translation));
        t
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &WorkspaceTransform) -> WorkspaceTransform {
        let (s, c) = self.yaw.sin_cos();
        let [x, y, z] = first.translation;
        WorkspaceTransform {
            yaw: self.yaw + first.yaw,
            translation: [
                c * x - s * y + self.translation[0],
                s * x + c * y + self.translation[1],
                z + self.translation[2],
            ],
        }
    }
}

/// Axis-aligned box for initial object positions plus a yaw range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub yaw: [f64; 2],
}

impl Workspace {
    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - tol && p[i] <= self.max[i] + tol)
    }

    fn validate(&self) -> Result<(), TrajectoryError> {
        let ok = (0..3).all(|i| self.min[i] <= self.max[i] && self.min[i].is_finite() && self.max[i].is_finite())
            && self.yaw[0] <= self.yaw[1];
        if ok {
            Ok(())
        } else {
            Err(TrajectoryError::EmptyWorkspace(format!(
                "min {:?} max {:?} yaw {:?}",
                self.min, self.max, self.yaw
            )))
        }
    }
}

/// Maps every hand keypoint, wrist pose and object pose by `t`.
pub fn augment(traj: &DemoTrajectory, t: &WorkspaceTransform) -> DemoTrajectory {
    let rigid = t.to_rigid();
    let mut out = traj.clone();
    for f in &mut out.frames {
        for p in &mut f.hand_keypoints {
            *p = rigid.transform_point(p);
        }
        f.wrist_pose = rigid.compose(&f.wrist_pose);
        f.object_pose = rigid.compose(&f.object_pose);
    }
    out
}

/// Draws `count` transforms uniformly: yaw from the workspace range, then
/// a translation putting the rotated initial object position uniformly in
/// the box.
pub fn sample_augmentations<R: Rng>(
    traj: &DemoTrajectory,
    count: usize,
    workspace: &Workspace,
    rng: &mut R,
) -> Result<Vec<(WorkspaceTransform, DemoTrajectory)>, TrajectoryError> {
    workspace.validate()?;
    if count == 0 {
        return Err(TrajectoryError::Invalid("augmentation count must be at least 1".into()));
    }
    let start = traj
        .frames
        .first()
        .ok_or_else(|| TrajectoryError::Invalid("no frames".into()))?
        .object_position();
    if !workspace.contains(&start, 1e-12) {
        return Err(TrajectoryError::EmptyWorkspace(format!(
            "initial object position {:?} is outside the workspace box",
            [start.x, start.y, start.z]
        )));
    }
    let uniform = |rng: &mut R, lo: f64, hi: f64| if lo < hi { rng.random_range(lo..hi) } else { lo };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let yaw = uniform(rng, workspace.yaw[0], workspace.yaw[1]);
        let target = Vec3::new(
            uniform(rng, workspace.min[0], workspace.max[0]),
            uniform(rng, workspace.min[1], workspace.max[1]),
            uniform(rng, workspace.min[2], workspace.max[2]),
        );
        let rotated = RigidTransform::from_axis_angle(&Vec3::z(), yaw).transform_point(&start);
        let shift = target - rotated;
        let t = WorkspaceTransform {
            yaw,
            translation: [shift.x, shift.y, shift.z],
        };
        let traj = augment(traj, &t);
        out.push((t, traj));
    }
    Ok(out)
}
