use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Policy, PolicyError};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    version: u32,
    /// Environment steps trained when the checkpoint was taken.
    step: usize,
    policy: Policy,
}

/// Writes every parameter, the normalizer state and the full policy
/// config as JSON.
pub fn save_checkpoint(path: &Path, policy: &Policy, step: usize) -> Result<(), PolicyError> {
    let doc = Document {
        version: CHECKPOINT_VERSION,
        step,
        policy: policy.clone(),
    };
    let text = serde_json::to_string(&doc).map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| PolicyError::Checkpoint(format!("{}: {e}", path.display())))
}

/// Returns the policy and its step count.
pub fn load_checkpoint(path: &Path) -> Result<(Policy, usize), PolicyError> {
    let text = std::fs::read_to_string(path).map_err(|e| PolicyError::Checkpoint(format!("{}: {e}", path.display())))?;
    let doc: Document = serde_json::from_str(&text).map_err(|e| PolicyError::Checkpoint(format!("{}: {e}", path.display())))?;
    if doc.version != CHECKPOINT_VERSION {
        return Err(PolicyError::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            doc.version
        )));
    }
    let p = &doc.policy;
    let consistent = p.actor.output_dim() == p.scales.len()
        && p.log_std.len() == p.scales.len()
        && p.critic.input_dim() == p.actor.input_dim()
        && p.normalizer.dim() == p.actor.input_dim()
        && p.actor.params.len() == super::Mlp::param_count(&p.actor.sizes)
        && p.critic.params.len() == super::Mlp::param_count(&p.critic.sizes);
    if !consistent {
        return Err(PolicyError::Checkpoint("parameter shapes are inconsistent".into()));
    }
    p.config.validate()?;
    Ok((doc.policy, doc.step))
}
