//! Staged reward: track the demonstrated fingertips until shortly before
//! the lift, then close on the object and follow its demonstrated path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::DemoTrajectory;
use crate::transform::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("demonstration has no lift index")]
    MissingLiftIndex,
    #[error("reward coefficient `{0}` must be positive")]
    NonPositive(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub beta_hand: f64,
    pub gamma_hand: f64,
    pub beta_close: f64,
    pub gamma_close: f64,
    pub beta_follow: f64,
    pub gamma_follow: f64,
    /// Frames before the lift at which the object stage starts.
    pub t0_offset: usize,
    /// Replace the dense reward with 1 at a successful episode end.
    pub sparse_mode: bool,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            beta_hand: 1.0,
            gamma_hand: 20.0,
            beta_close: 0.5,
            gamma_close: 20.0,
            beta_follow: 1.0,
            gamma_follow: 100.0,
            t0_offset: 15,
            sparse_mode: false,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), RewardError> {
        for (name, v) in [
            ("beta_hand", self.beta_hand),
            ("gamma_hand", self.gamma_hand),
            ("beta_close", self.beta_close),
            ("gamma_close", self.gamma_close),
            ("beta_follow", self.beta_follow),
            ("gamma_follow", self.gamma_follow),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RewardError::NonPositive(name));
            }
        }
        Ok(())
    }
}

/// `max(0, lift_index - t0_offset)`.
pub fn switch_time(demo: &DemoTrajectory, params: &RewardParams) -> Result<usize, RewardError> {
    let lift = demo.lift_index.ok_or(RewardError::MissingLiftIndex)?;
    Ok(lift.saturating_sub(params.t0_offset))
}

pub fn hand_reward(fingertips: &[Vec3; 5], demo_fingertips: &[Vec3; 5], params: &RewardParams) -> f64 {
    let sq: f64 = fingertips
        .iter()
        .zip(demo_fingertips)
        .map(|(p, h)| (h - p).norm_squared())
        .sum();
    params.beta_hand * (-params.gamma_hand * sq).exp()
}

pub fn object_reward(fingertips: &[Vec3; 5], object: &Vec3, demo_object: &Vec3, params: &RewardParams) -> f64 {
    let close: f64 = fingertips.iter().map(|p| (p - object).norm_squared()).sum();
    let follow = (demo_object - object).norm_squared();
    params.beta_close * (-params.gamma_close * close).exp() + params.beta_follow * (-params.gamma_follow * follow).exp()
}

/// Quantities the staged reward reads at one frame.
#[derive(Debug, Clone, Copy)]
pub struct RewardInputs {
    pub fingertips: [Vec3; 5],
    pub demo_fingertips: [Vec3; 5],
    pub object: Vec3,
    pub demo_object: Vec3,
    /// The episode ended at this frame with the object held along the path.
    pub success_terminal: bool,
}

/// Hand stage for `t < t0`, object stage from `t0` on; in sparse mode 1 at
/// a successful terminal frame and 0 everywhere else.
pub fn staged_reward(inputs: &RewardInputs, t: usize, t0: usize, params: &RewardParams) -> f64 {
    if params.sparse_mode {
        return if inputs.success_terminal { 1.0 } else { 0.0 };
    }
    if t < t0 {
        hand_reward(&inputs.fingertips, &inputs.demo_fingertips, params)
    } else {
        object_reward(&inputs.fingertips, &inputs.object, &inputs.demo_object, params)
    }
}
