//! Human-to-robot retargeting: per-frame constrained keypoint matching and
//! the wrist-relative vector baselines.

mod io;
mod solver;
mod vector;

#[cfg(test)]
mod tests;

pub use io::{joint_trajectory_from_json, joint_trajectory_to_json, load_joint_trajectory, save_joint_trajectory};
pub use vector::{dexpilot_retarget, vector_retarget};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{JointConfig, KinematicChain, KinematicsError};
use crate::trajectory::{DemoTrajectory, HandLayout};
use crate::transform::Vec3;
use solver::{Problem, Term};

#[derive(Debug, Error)]
pub enum RetargetError {
    #[error("invalid retarget config: {0}")]
    Config(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("initial configuration violates joint limits")]
    InitOutOfLimits,
    #[error("joint trajectory file: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub residual_tol: f64,
    pub damping_init: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 50,
            residual_tol: 1e-10,
            damping_init: 1e-3,
        }
    }
}

/// Pairs a human keypoint index with a robot keypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Correspondence {
    pub human: usize,
    pub robot: String,
    pub weight: f64,
}

impl Correspondence {
    /// Weight 1 for robot fingertips, 0.5 for every other keypoint.
    pub fn standard(chain: &KinematicChain, pairs: &[(usize, &str)]) -> Vec<Correspondence> {
        pairs
            .iter()
            .map(|&(human, robot)| Correspondence {
                human,
                robot: robot.to_string(),
                weight: if chain.fingertip_ids().iter().any(|f| f == robot) { 1.0 } else { 0.5 },
            })
            .collect()
    }

    /// Human keypoint `i` paired with the robot's `i`-th keypoint, for
    /// chains that copy the hand layout.
    pub fn identity(chain: &KinematicChain) -> Vec<Correspondence> {
        let pairs: Vec<(usize, &str)> = chain
            .keypoints()
            .iter()
            .enumerate()
            .map(|(i, k)| (i, k.id.as_str()))
            .collect();
        Self::standard(chain, &pairs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetargetConfig {
    /// Hand-size scaling applied to human keypoints about the object.
    pub alpha: f64,
    pub correspondence: Vec<Correspondence>,
    /// Bound on the Euclidean norm of consecutive joint differences.
    pub step_limit_d: f64,
    pub solver: SolverConfig,
    /// Weight of each fingertip-pair term in the pairwise baseline.
    pub pair_weight: f64,
    /// Damping of the arm inverse kinematics in the vector baselines.
    pub ik_damping: f64,
}

impl Default for RetargetConfig {
    fn default() -> Self {
        RetargetConfig {
            alpha: 1.6,
            correspondence: Vec::new(),
            step_limit_d: 0.15,
            solver: SolverConfig::default(),
            pair_weight: 1.0,
            ik_damping: 0.01,
        }
    }
}

impl RetargetConfig {
    pub fn validate(&self) -> Result<(), RetargetError> {
        let bad = |m: String| Err(RetargetError::Config(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.step_limit_d > 0.0 && self.step_limit_d.is_finite()) {
            return bad(format!("step_limit_d must be positive, got {}", self.step_limit_d));
        }
        if self.correspondence.is_empty() {
            return bad("correspondence must not be empty".into());
        }
        if let Some(c) = self.correspondence.iter().find(|c| !(c.weight > 0.0 && c.weight.is_finite())) {
            return bad(format!("weight of `{}` must be positive", c.robot));
        }
        if !(self.pair_weight >= 0.0) || !(self.ik_damping > 0.0) {
            return bad("pair_weight must be non-negative and ik_damping positive".into());
        }
        if self.solver.max_iters == 0 || !(self.solver.residual_tol >= 0.0) || !(self.solver.damping_init > 0.0) {
            return bad("solver settings must be positive".into());
        }
        Ok(())
    }

    /// Resolves robot keypoint ids to indices and checks human indices.
    fn resolve(&self, chain: &KinematicChain, layout: &HandLayout) -> Result<Vec<(usize, usize, f64)>, RetargetError> {
        self.validate()?;
        self.correspondence
            .iter()
            .map(|c| {
                let kp = chain
                    .keypoint_index(&c.robot)
                    .ok_or_else(|| KinematicsError::UnknownKeypoint(c.robot.clone()))?;
                if c.human >= layout.count {
                    return Err(RetargetError::Config(format!(
                        "human keypoint {} outside a {}-point layout",
                        c.human, layout.count
                    )));
                }
                Ok((c.human, kp, c.weight))
            })
            .collect()
    }
}

/// Robot joint configurations with the per-frame deltas that replay them.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory {
    pub chain: String,
    pub configs: Vec<JointConfig>,
    /// `configs[t] - configs[t-1]`; the first entry is zero.
    pub primitive_actions: Vec<DVector<f64>>,
    pub residuals: Vec<f64>,
    pub converged: Vec<bool>,
}

impl JointTrajectory {
    fn from_configs(chain: &str, configs: Vec<JointConfig>, residuals: Vec<f64>, converged: Vec<bool>) -> Self {
        let primitive_actions = configs
            .iter()
            .enumerate()
            .map(|(t, q)| if t == 0 { DVector::zeros(q.len()) } else { &q.0 - &configs[t - 1].0 })
            .collect();
        JointTrajectory {
            chain: chain.to_string(),
            configs,
            primitive_actions,
            residuals,
            converged,
        }
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Checks the action identity, the step bound and joint limits.
    pub fn check(&self, chain: &KinematicChain, d: f64) -> Result<(), String> {
        for t in 0..self.len() {
            if !chain.within_limits(&self.configs[t], 1e-12) {
                return Err(format!("frame {t} violates joint limits"));
            }
            if t > 0 {
                let diff = &self.configs[t].0 - &self.configs[t - 1].0;
                if diff != self.primitive_actions[t] {
                    return Err(format!("frame {t}: action differs from config delta"));
                }
                if diff.norm() > d + 1e-9 {
                    return Err(format!("frame {t}: step {} exceeds {d}", diff.norm()));
                }
            }
        }
        Ok(())
    }
}

/// Scaled target `alpha (h - o) + o` for every correspondence entry.
fn position_terms(pairs: &[(usize, usize, f64)], alpha: f64, hand: &[Vec3], object: &Vec3) -> Vec<Term> {
    pairs
        .iter()
        .map(|&(h, kp, weight)| Term::Point {
            kp,
            target: (hand[h] - object) * alpha + object,
            weight,
        })
        .collect()
}

/// Solves one frame: minimizes the weighted keypoint discrepancy with
/// `|q - q_prev| <= d` and joint limits. Returns the solution, the objective
/// there and whether the solver converged within its budget.
pub fn retarget_frame(
    chain: &KinematicChain,
    cfg: &RetargetConfig,
    hand: &[Vec3],
    object: &Vec3,
    q_prev: &JointConfig,
) -> Result<(JointConfig, f64, bool), RetargetError> {
    let layout = layout_for(hand.len());
    let pairs = cfg.resolve(chain, &layout)?;
    check_init(chain, q_prev)?;
    Ok(solve_position(chain, cfg, &pairs, hand, object, q_prev, true))
}

fn layout_for(count: usize) -> HandLayout {
    HandLayout::from_version(1)
        .filter(|l| l.count == count)
        .unwrap_or(HandLayout {
            version: 0,
            count,
            wrist: 0,
            fingertips: [0; 5],
        })
}

fn check_init(chain: &KinematicChain, q: &JointConfig) -> Result<(), RetargetError> {
    chain.check_config(q)?;
    if !chain.within_limits(q, 1e-12) {
        return Err(RetargetError::InitOutOfLimits);
    }
    Ok(())
}

fn solve_position(
    chain: &KinematicChain,
    cfg: &RetargetConfig,
    pairs: &[(usize, usize, f64)],
    hand: &[Vec3],
    object: &Vec3,
    q_prev: &JointConfig,
    constrained: bool,
) -> (JointConfig, f64, bool) {
    let terms = position_terms(pairs, cfg.alpha, hand, object);
    let active: Vec<usize> = (0..chain.dof()).collect();
    let problem = Problem {
        chain,
        terms: &terms,
        active: &active,
        ball: constrained.then_some((q_prev, cfg.step_limit_d)),
    };
    let sol = problem.solve(q_prev, &cfg.solver);
    (sol.q, sol.objective, sol.converged)
}

/// Retargets every frame in order, warm starting each from the previous
/// solution. The first frame is solved from `q_init` without the step bound
/// so the trajectory starts at the demonstration's initial pose.
pub fn retarget_trajectory(
    chain: &KinematicChain,
    cfg: &RetargetConfig,
    traj: &DemoTrajectory,
    q_init: &JointConfig,
) -> Result<JointTrajectory, RetargetError> {
    let pairs = cfg.resolve(chain, &traj.layout)?;
    check_init(chain, q_init)?;
    let mut configs = Vec::with_capacity(traj.len());
    let mut residuals = Vec::with_capacity(traj.len());
    let mut converged = Vec::with_capacity(traj.len());
    let mut q_prev = q_init.clone();
    for (t, f) in traj.frames.iter().enumerate() {
        let (q, res, ok) = solve_position(
            chain,
            cfg,
            &pairs,
            &f.hand_keypoints,
            &f.object_position(),
            &q_prev,
            t > 0,
        );
        q_prev = q.clone();
        configs.push(q);
        residuals.push(res);
        converged.push(ok);
    }
    Ok(JointTrajectory::from_configs(chain.name(), configs, residuals, converged))
}

/// The retargeting methods compared in evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetargetMethod {
    Position,
    Vector,
    Dexpilot,
}

impl RetargetMethod {
    pub fn run(
        self,
        chain: &KinematicChain,
        cfg: &RetargetConfig,
        traj: &DemoTrajectory,
        q_init: &JointConfig,
    ) -> Result<JointTrajectory, RetargetError> {
        match self {
            RetargetMethod::Position => retarget_trajectory(chain, cfg, traj, q_init),
            RetargetMethod::Vector => vector_retarget(chain, cfg, traj, q_init),
            RetargetMethod::Dexpilot => dexpilot_retarget(chain, cfg, traj, q_init),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RetargetMethod::Position => "position",
            RetargetMethod::Vector => "vector",
            RetargetMethod::Dexpilot => "dexpilot",
        }
    }
}
