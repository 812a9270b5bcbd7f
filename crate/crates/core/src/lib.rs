//! Transfer of human hand demonstrations to a robot hand.
//!
//! The pipeline: synthesize or load demonstrations ([`trajectory`]),
//! retarget them to robot joint trajectories ([`retarget`]), replay the
//! resulting primitive actions in a grasp environment ([`env`]) and learn a
//! residual correction on top of them ([`policy`]) driven by a staged
//! reward ([`reward`]). [`eval`] scores policies and retargeting baselines;
//! [`task`] builds the toy claw-robot task used for training.

pub mod kinematics;
pub mod transform;
pub mod trajectory;
pub mod retarget;
pub mod env;
pub mod reward;
pub mod policy;
pub mod eval;
pub mod task;
