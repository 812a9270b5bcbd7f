use nalgebra::DMatrix;

use super::{JointConfig, JointKind, KinematicChain};
use crate::transform::{RigidTransform, Vec3};

/// Link and joint frames of a chain posed at one configuration.
pub struct Frames<'a> {
    chain: &'a KinematicChain,
    links: Vec<RigidTransform>,
    /// Joint frame (parent pose composed with origin) in the base frame.
    joint_frames: Vec<RigidTransform>,
}

impl<'a> Frames<'a> {
    pub(crate) fn compute(chain: &'a KinematicChain, q: &JointConfig) -> Self {
        let mut links = vec![RigidTransform::identity(); chain.links().len()];
        let mut joint_frames = vec![RigidTransform::identity(); chain.dof()];
        links[chain.root_index()] = RigidTransform::identity();
        for &j in chain.topo_joints() {
            let joint = &chain.joints()[j];
            let frame = links[chain.joint_parent(j)].compose(&joint.origin);
            links[chain.joint_child(j)] = frame.compose(&joint.motion(q.0[j]));
            joint_frames[j] = frame;
        }
        Frames {
            chain,
            links,
            joint_frames,
        }
    }

    pub fn link_pose(&self, link: usize) -> &RigidTransform {
        &self.links[link]
    }

    pub fn keypoint_pose(&self, kp: usize) -> RigidTransform {
        let k = &self.chain.keypoints()[kp];
        self.links[self.chain.keypoint_link(kp)].compose(&k.offset)
    }

    pub fn keypoint_position(&self, kp: usize) -> Vec3 {
        let k = &self.chain.keypoints()[kp];
        self.links[self.chain.keypoint_link(kp)].transform_point(k.offset.translation())
    }

    /// Joint axis in the base frame.
    pub fn joint_axis(&self, j: usize) -> Vec3 {
        self.joint_frames[j].transform_vector(&self.chain.joints()[j].axis)
    }

    /// Positional Jacobian, 3 x dof; columns of joints not on the keypoint's
    /// path from the root are zero.
    pub fn keypoint_jacobian(&self, kp: usize) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(3, self.chain.dof());
        self.add_keypoint_jacobian(kp, 1.0, &mut jac, 0);
        jac
    }

    /// Writes `scale * J_kp` into rows `row..row + 3` of `out`, accumulating.
    pub fn add_keypoint_jacobian(&self, kp: usize, scale: f64, out: &mut DMatrix<f64>, row: usize) {
        let p = self.keypoint_position(kp);
        for &j in self.chain.ancestors(self.chain.keypoint_link(kp)) {
            let axis = self.joint_axis(j);
            let col = match self.chain.joints()[j].kind {
                JointKind::Revolute => axis.cross(&(p - self.joint_frames[j].translation())),
                JointKind::Prismatic => axis,
            };
            for r in 0..3 {
                out[(row + r, j)] += scale * col[r];
            }
        }
    }

    /// Geometric Jacobian, 6 x dof: rows 0..3 linear velocity of the
    /// keypoint origin, rows 3..6 angular velocity of its frame.
    pub fn frame_jacobian(&self, kp: usize) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(6, self.chain.dof());
        let p = self.keypoint_position(kp);
        for &j in self.chain.ancestors(self.chain.keypoint_link(kp)) {
            let axis = self.joint_axis(j);
            match self.chain.joints()[j].kind {
                JointKind::Revolute => {
                    let lin = axis.cross(&(p - self.joint_frames[j].translation()));
                    for r in 0..3 {
                        jac[(r, j)] = lin[r];
                        jac[(r + 3, j)] = axis[r];
                    }
                }
                JointKind::Prismatic => {
                    for r in 0..3 {
                        jac[(r, j)] = axis[r];
                    }
                }
            }
        }
        jac
    }
}
