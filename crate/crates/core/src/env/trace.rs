use serde::{Deserialize, Serialize};

use super::{EnvState, StepInfo};
use crate::transform::PoseRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFrame {
    pub t: usize,
    pub q: Vec<f64>,
    pub object_pose: PoseRecord,
    pub contacts: [bool; 5],
    pub attached: bool,
    pub reward: f64,
    pub attached_now: bool,
    pub detached_now: bool,
    pub dropped: bool,
}

/// Per-frame record of one episode, frame 0 being the reset state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeTrace {
    pub demo_len: usize,
    /// Object height the object rests at and falls back to.
    pub support_z: f64,
    pub frames: Vec<TraceFrame>,
}

impl EpisodeTrace {
    pub(super) fn push(&mut self, s: &EnvState, reward: f64, info: StepInfo) {
        self.frames.push(TraceFrame {
            t: s.t,
            q: s.q.as_slice().to_vec(),
            object_pose: PoseRecord::from(&s.object_pose),
            contacts: s.contacts,
            attached: s.attached,
            reward,
            attached_now: info.attached_now,
            detached_now: info.detached_now,
            dropped: info.dropped,
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn total_reward(&self) -> f64 {
        self.frames.iter().map(|f| f.reward).sum()
    }
}
