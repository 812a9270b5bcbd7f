//! Articulated robot model: joints, links and named keypoint frames.
//!
//! A [`KinematicChain`] is a rooted tree of revolute and prismatic joints.
//! Joint order in the chain defines the order of entries in a
//! [`JointConfig`]. Keypoints are rigid frames attached to links; forward
//! kinematics and Jacobians are computed for them.

mod chain;
mod format;
mod frames;

pub use chain::{Joint, JointKind, Keypoint, KinematicChain};
pub use format::{ChainDocument, FORMAT_GRAMMAR};
pub use frames::Frames;

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::transform::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("semantic error in {entity}: {message}")]
    Semantic { entity: String, message: String },
}

impl ChainError {
    pub(crate) fn semantic(entity: impl Into<String>, message: impl Into<String>) -> Self {
        ChainError::Semantic {
            entity: entity.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("joint configuration has {got} values, chain has {expected} degrees of freedom")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown keypoint `{0}`")]
    UnknownKeypoint(String),
}

/// Joint positions in chain order (radians for revolute, meters for prismatic).
#[derive(Debug, Clone, PartialEq)]
pub struct JointConfig(pub DVector<f64>);

impl JointConfig {
    pub fn new(values: Vec<f64>) -> Self {
        JointConfig(DVector::from_vec(values))
    }

    pub fn zeros(dof: usize) -> Self {
        JointConfig(DVector::zeros(dof))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Keypoint positions in the base frame for configuration `q`.
pub fn forward_kinematics(
    chain: &KinematicChain,
    q: &JointConfig,
) -> Result<BTreeMap<String, Vec3>, KinematicsError> {
    let frames = chain.frames(q)?;
    Ok(chain
        .keypoints()
        .iter()
        .enumerate()
        .map(|(i, kp)| (kp.id.clone(), frames.keypoint_position(i)))
        .collect())
}

/// Positional Jacobian (3 x dof) of one keypoint.
pub fn keypoint_jacobian(
    chain: &KinematicChain,
    q: &JointConfig,
    keypoint_id: &str,
) -> Result<DMatrix<f64>, KinematicsError> {
    let idx = chain
        .keypoint_index(keypoint_id)
        .ok_or_else(|| KinematicsError::UnknownKeypoint(keypoint_id.to_string()))?;
    let frames = chain.frames(q)?;
    Ok(frames.keypoint_jacobian(idx))
}
