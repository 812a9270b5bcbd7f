use std::collections::{HashMap, VecDeque};

use super::{ChainError, Frames, JointConfig, KinematicsError};
use crate::transform::{RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent_link: String,
    pub child_link: String,
    /// Pose of the joint frame in the parent link frame at zero displacement.
    pub origin: RigidTransform,
    /// Motion axis in the joint frame, unit length.
    pub axis: Vec3,
    pub limits: (f64, f64),
}

impl Joint {
    /// Displacement of the child link relative to the joint frame.
    pub fn motion(&self, value: f64) -> RigidTransform {
        match self.kind {
            JointKind::Revolute => RigidTransform::from_axis_angle(&self.axis, value),
            JointKind::Prismatic => RigidTransform::from_translation(self.axis * value),
        }
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.limits.0, self.limits.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub id: String,
    pub link: String,
    pub offset: RigidTransform,
}

/// Validated kinematic tree. Immutable once built.
#[derive(Debug, Clone)]
pub struct KinematicChain {
    name: String,
    links: Vec<String>,
    joints: Vec<Joint>,
    keypoints: Vec<Keypoint>,
    fingertip_ids: Vec<String>,
    wrist_id: Option<String>,

    link_index: HashMap<String, usize>,
    keypoint_index: HashMap<String, usize>,
    root: usize,
    /// Joints sorted so every parent link is posed before its children.
    topo_joints: Vec<usize>,
    joint_parent: Vec<usize>,
    joint_child: Vec<usize>,
    keypoint_link: Vec<usize>,
    /// For each link, the joints on the path from the root, root first.
    ancestors: Vec<Vec<usize>>,
}

impl PartialEq for KinematicChain {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.links == other.links
            && self.joints == other.joints
            && self.keypoints == other.keypoints
            && self.fingertip_ids == other.fingertip_ids
            && self.wrist_id == other.wrist_id
    }
}

impl KinematicChain {
    /// Validates the parts and builds the chain.
    ///
    /// `fingertip_ids` must be empty or name exactly five keypoints.
    pub fn new(
        name: String,
        links: Vec<String>,
        joints: Vec<Joint>,
        keypoints: Vec<Keypoint>,
        fingertip_ids: Vec<String>,
        wrist_id: Option<String>,
    ) -> Result<Self, ChainError> {
        let mut link_index = HashMap::new();
        for (i, l) in links.iter().enumerate() {
            if link_index.insert(l.clone(), i).is_some() {
                return Err(ChainError::semantic(
                    format!("link `{l}`"),
                    "duplicate link name",
                ));
            }
        }
        if links.is_empty() {
            return Err(ChainError::semantic("chain", "no links declared"));
        }

        let mut joint_names = HashMap::new();
        let mut parent_of_link: Vec<Option<usize>> = vec![None; links.len()];
        let mut joint_parent = Vec::with_capacity(joints.len());
        let mut joint_child = Vec::with_capacity(joints.len());
        for (j, joint) in joints.iter().enumerate() {
            let ent = format!("joint `{}`", joint.name);
            if joint_names.insert(joint.name.clone(), j).is_some() {
                return Err(ChainError::semantic(ent, "duplicate joint name"));
            }
            let parent = *link_index.get(&joint.parent_link).ok_or_else(|| {
                ChainError::semantic(
                    &ent,
                    format!("parent link `{}` is not declared", joint.parent_link),
                )
            })?;
            let child = *link_index.get(&joint.child_link).ok_or_else(|| {
                ChainError::semantic(
                    &ent,
                    format!("child link `{}` is not declared", joint.child_link),
                )
            })?;
            if parent == child {
                return Err(ChainError::semantic(
                    ent,
                    "cycle: parent and child are the same link",
                ));
            }
            if let Some(other) = parent_of_link[child] {
                return Err(ChainError::semantic(
                    ent,
                    format!(
                        "link `{}` already has parent joint `{}`",
                        joint.child_link, joints[other].name
                    ),
                ));
            }
            parent_of_link[child] = Some(j);
            let n = joint.axis.norm();
            if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
                return Err(ChainError::semantic(
                    ent,
                    format!("axis norm {n} is not 1"),
                ));
            }
            let (lo, hi) = joint.limits;
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(ChainError::semantic(ent, "limits must be finite"));
            }
            if lo > hi {
                return Err(ChainError::semantic(
                    ent,
                    format!("inverted limits [{lo}, {hi}]"),
                ));
            }
            joint_parent.push(parent);
            joint_child.push(child);
        }

        let roots: Vec<usize> = (0..links.len())
            .filter(|&l| parent_of_link[l].is_none())
            .collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => {
                return Err(ChainError::semantic(
                    "chain",
                    "cycle: every link has a parent joint",
                ))
            }
            many => {
                let names: Vec<&str> = many.iter().map(|&l| links[l].as_str()).collect();
                return Err(ChainError::semantic(
                    "chain",
                    format!("multiple root links: {}", names.join(", ")),
                ));
            }
        };

        // Breadth-first from the root; anything unreached sits on a cycle.
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
        for (j, &p) in joint_parent.iter().enumerate() {
            children[p].push(j);
        }
        let mut ancestors: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
        let mut reached = vec![false; links.len()];
        let mut topo_joints = Vec::with_capacity(joints.len());
        let mut queue = VecDeque::from([root]);
        reached[root] = true;
        while let Some(l) = queue.pop_front() {
            for &j in &children[l] {
                let c = joint_child[j];
                if reached[c] {
                    continue;
                }
                reached[c] = true;
                let mut path = ancestors[l].clone();
                path.push(j);
                ancestors[c] = path;
                topo_joints.push(j);
                queue.push_back(c);
            }
        }
        if let Some(j) = (0..joints.len()).find(|&j| !reached[joint_child[j]]) {
            return Err(ChainError::semantic(
                format!("joint `{}`", joints[j].name),
                "cycle: joint is not connected to the root link",
            ));
        }

        let mut keypoint_index = HashMap::new();
        let mut keypoint_link = Vec::with_capacity(keypoints.len());
        for (i, kp) in keypoints.iter().enumerate() {
            let ent = format!("keypoint `{}`", kp.id);
            if keypoint_index.insert(kp.id.clone(), i).is_some() {
                return Err(ChainError::semantic(ent, "duplicate keypoint id"));
            }
            let l = *link_index.get(&kp.link).ok_or_else(|| {
                ChainError::semantic(&ent, format!("link `{}` is not declared", kp.link))
            })?;
            keypoint_link.push(l);
        }
        if !fingertip_ids.is_empty() && fingertip_ids.len() != 5 {
            return Err(ChainError::semantic(
                "chain.fingertips",
                format!("expected 5 fingertip ids, found {}", fingertip_ids.len()),
            ));
        }
        for id in fingertip_ids.iter().chain(wrist_id.iter()) {
            if !keypoint_index.contains_key(id) {
                return Err(ChainError::semantic(
                    format!("keypoint `{id}`"),
                    "referenced by chain header but not declared",
                ));
            }
        }

        Ok(Self {
            name,
            links,
            joints,
            keypoints,
            fingertip_ids,
            wrist_id,
            link_index,
            keypoint_index,
            root,
            topo_joints,
            joint_parent,
            joint_child,
            keypoint_link,
            ancestors,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn links(&self) -> &[String] {
        &self.links
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn keypoints(&self) -> &[Keypoint] {
        &self.keypoints
    }

    pub fn fingertip_ids(&self) -> &[String] {
        &self.fingertip_ids
    }

    pub fn wrist_id(&self) -> Option<&str> {
        self.wrist_id.as_deref()
    }

    pub fn root_link(&self) -> &str {
        &self.links[self.root]
    }

    pub fn keypoint_index(&self, id: &str) -> Option<usize> {
        self.keypoint_index.get(id).copied()
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.link_index.get(name).copied()
    }

    /// Keypoint indices of the five fingertips, in order.
    pub fn fingertip_indices(&self) -> Vec<usize> {
        self.fingertip_ids
            .iter()
            .map(|id| self.keypoint_index[id])
            .collect()
    }

    pub fn wrist_index(&self) -> Option<usize> {
        self.wrist_id.as_ref().map(|id| self.keypoint_index[id])
    }

    /// Joints between the root and the wrist keypoint's link (the arm).
    ///
    /// Empty when the chain has no wrist keypoint.
    pub fn arm_joints(&self) -> Vec<usize> {
        match self.wrist_index() {
            Some(w) => self.ancestors[self.keypoint_link[w]].clone(),
            None => Vec::new(),
        }
    }

    pub(crate) fn topo_joints(&self) -> &[usize] {
        &self.topo_joints
    }

    pub(crate) fn joint_parent(&self, j: usize) -> usize {
        self.joint_parent[j]
    }

    pub(crate) fn joint_child(&self, j: usize) -> usize {
        self.joint_child[j]
    }

    pub(crate) fn root_index(&self) -> usize {
        self.root
    }

    pub(crate) fn keypoint_link(&self, kp: usize) -> usize {
        self.keypoint_link[kp]
    }

    pub(crate) fn ancestors(&self, link: usize) -> &[usize] {
        &self.ancestors[link]
    }

    pub fn check_config(&self, q: &JointConfig) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Poses every link and joint frame for `q`.
    pub fn frames(&self, q: &JointConfig) -> Result<Frames<'_>, KinematicsError> {
        self.check_config(q)?;
        Ok(Frames::compute(self, q))
    }

    /// Clamps each value into its joint limits.
    pub fn clamp_to_limits(&self, q: &mut JointConfig) {
        for (v, j) in q.0.iter_mut().zip(&self.joints) {
            *v = j.clamp(*v);
        }
    }

    pub fn within_limits(&self, q: &JointConfig, tol: f64) -> bool {
        q.0.iter()
            .zip(&self.joints)
            .all(|(v, j)| *v >= j.limits.0 - tol && *v <= j.limits.1 + tol)
    }

    /// Copy of the chain with every length (origins, keypoint offsets and
    /// prismatic limits) multiplied by `factor`.
    pub fn scaled(&self, factor: f64, name: &str) -> KinematicChain {
        let joints = self
            .joints
            .iter()
            .map(|j| {
                let origin = RigidTransform::new(*j.origin.rotation(), j.origin.translation() * factor);
                let limits = match j.kind {
                    JointKind::Prismatic => (j.limits.0 * factor, j.limits.1 * factor),
                    JointKind::Revolute => j.limits,
                };
                Joint {
                    origin,
                    limits,
                    ..j.clone()
                }
            })
            .collect();
        let keypoints = self
            .keypoints
            .iter()
            .map(|k| Keypoint {
                offset: RigidTransform::new(*k.offset.rotation(), k.offset.translation() * factor),
                ..k.clone()
            })
            .collect();
        KinematicChain::new(
            name.to_string(),
            self.links.clone(),
            joints,
            keypoints,
            self.fingertip_ids.clone(),
            self.wrist_id.clone(),
        )
        .expect("scaling preserves validity")
    }
}
