use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{JointTrajectory, RetargetConfig, RetargetError};
use crate::kinematics::JointConfig;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    q: Vec<f64>,
    action: Vec<f64>,
    residual: f64,
    converged: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    chain: String,
    method: String,
    config: RetargetConfig,
    rows: Vec<Row>,
}

pub fn joint_trajectory_to_json(traj: &JointTrajectory, method: &str, cfg: &RetargetConfig) -> String {
    let rows = (0..traj.len())
        .map(|t| Row {
            q: traj.configs[t].as_slice().to_vec(),
            action: traj.primitive_actions[t].as_slice().to_vec(),
            residual: traj.residuals[t],
            converged: traj.converged[t],
        })
        .collect();
    let doc = Document {
        chain: traj.chain.clone(),
        method: method.to_string(),
        config: cfg.clone(),
        rows,
    };
    serde_json::to_string_pretty(&doc).expect("joint trajectory serializes")
}

/// Parses a joint-trajectory file, returning the trajectory, the method
/// name and the configuration echoed in its header.
pub fn joint_trajectory_from_json(text: &str) -> Result<(JointTrajectory, String, RetargetConfig), RetargetError> {
    let doc: Document = serde_json::from_str(text).map_err(|e| RetargetError::Format(e.to_string()))?;
    let dof = doc.rows.first().map(|r| r.q.len()).unwrap_or(0);
    let mut traj = JointTrajectory {
        chain: doc.chain,
        configs: Vec::with_capacity(doc.rows.len()),
        primitive_actions: Vec::with_capacity(doc.rows.len()),
        residuals: Vec::with_capacity(doc.rows.len()),
        converged: Vec::with_capacity(doc.rows.len()),
    };
    for (t, r) in doc.rows.into_iter().enumerate() {
        if r.q.len() != dof || r.action.len() != dof {
            return Err(RetargetError::Format(format!("rows[{t}]: expected {dof} joint values")));
        }
        if r.q.iter().chain(&r.action).any(|v| !v.is_finite()) {
            return Err(RetargetError::Format(format!("rows[{t}]: non-finite value")));
        }
        traj.configs.push(JointConfig::new(r.q));
        traj.primitive_actions.push(DVector::from_vec(r.action));
        traj.residuals.push(r.residual);
        traj.converged.push(r.converged);
    }
    Ok((traj, doc.method, doc.config))
}

pub fn save_joint_trajectory(
    path: &Path,
    traj: &JointTrajectory,
    method: &str,
    cfg: &RetargetConfig,
) -> Result<(), RetargetError> {
    std::fs::write(path, joint_trajectory_to_json(traj, method, cfg)).map_err(|source| RetargetError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_joint_trajectory(path: &Path) -> Result<(JointTrajectory, String, RetargetConfig), RetargetError> {
    let text = std::fs::read_to_string(path).map_err(|source| RetargetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    joint_trajectory_from_json(&text)
}
