//! Wrist-relative vector retargeting and its fingertip-pair extension.
//!
//! The arm follows the scaled human wrist pose through damped least-squares
//! inverse kinematics; the remaining joints then match wrist-to-keypoint
//! vectors (and, for the pairwise variant, fingertip-to-fingertip vectors).
//! Both stages share one step budget: the arm takes its part of `d` first
//! and the hand solver gets what remains.

use nalgebra::DVector;

use super::solver::{Problem, Term};
use super::{check_init, JointTrajectory, RetargetConfig, RetargetError};
use crate::kinematics::{JointConfig, KinematicChain};
use crate::trajectory::DemoTrajectory;
use crate::transform::{RigidTransform, Vec3};

/// Wrist-to-keypoint vector matching.
pub fn vector_retarget(
    chain: &KinematicChain,
    cfg: &RetargetConfig,
    traj: &DemoTrajectory,
    q_init: &JointConfig,
) -> Result<JointTrajectory, RetargetError> {
    run(chain, cfg, traj, q_init, 0.0)
}

/// Vector matching plus all ten fingertip-pair vectors weighted by
/// `cfg.pair_weight`.
pub fn dexpilot_retarget(
    chain: &KinematicChain,
    cfg: &RetargetConfig,
    traj: &DemoTrajectory,
    q_init: &JointConfig,
) -> Result<JointTrajectory, RetargetError> {
    if chain.fingertip_ids().len() != 5 {
        return Err(RetargetError::Config("fingertip-pair terms need five robot fingertips".into()));
    }
    run(chain, cfg, traj, q_init, cfg.pair_weight)
}

fn run(
    chain: &KinematicChain,
    cfg: &RetargetConfig,
    traj: &DemoTrajectory,
    q_init: &JointConfig,
    pair_weight: f64,
) -> Result<JointTrajectory, RetargetError> {
    let pairs = cfg.resolve(chain, &traj.layout)?;
    check_init(chain, q_init)?;
    let wrist = chain
        .wrist_index()
        .ok_or_else(|| RetargetError::Config("vector retargeting needs a robot wrist keypoint".into()))?;
    let arm = chain.arm_joints();
    let hand: Vec<usize> = (0..chain.dof()).filter(|j| !arm.contains(j)).collect();
    let human_wrist = traj.layout.wrist;
    let human_tips = traj.layout.fingertips;
    let robot_tips = chain.fingertip_indices();
    let d = cfg.step_limit_d;

    let mut configs = Vec::with_capacity(traj.len());
    let mut residuals = Vec::with_capacity(traj.len());
    let mut converged = Vec::with_capacity(traj.len());
    let mut q_prev = q_init.clone();
    for (t, f) in traj.frames.iter().enumerate() {
        let h = &f.hand_keypoints;
        let o = f.object_position();
        let target = RigidTransform::new(*f.wrist_pose.rotation(), (h[human_wrist] - o) * cfg.alpha + o);

        let (mut q, ik_ok) = arm_ik(chain, cfg, wrist, &arm, &target, &q_prev);
        let mut arm_step = 0.0;
        if t > 0 {
            let y: DVector<f64> = DVector::from_iterator(arm.len(), arm.iter().map(|&j| q.0[j] - q_prev.0[j]));
            let n = y.norm();
            if n > d {
                for (k, &j) in arm.iter().enumerate() {
                    q.0[j] = q_prev.0[j] + y[k] * (d / n);
                }
                chain.clamp_to_limits(&mut q);
            }
            arm_step = arm.iter().map(|&j| (q.0[j] - q_prev.0[j]).powi(2)).sum::<f64>().sqrt();
        }

        let mut terms: Vec<Term> = pairs
            .iter()
            .filter(|&&(_, kp, _)| kp != wrist)
            .map(|&(hi, kp, weight)| Term::Diff {
                a: kp,
                b: wrist,
                target: (h[hi] - h[human_wrist]) * cfg.alpha,
                weight,
            })
            .collect();
        if pair_weight > 0.0 {
            for i in 0..5 {
                for j in i + 1..5 {
                    terms.push(Term::Diff {
                        a: robot_tips[i],
                        b: robot_tips[j],
                        target: (h[human_tips[i]] - h[human_tips[j]]) * cfg.alpha,
                        weight: pair_weight,
                    });
                }
            }
        }
        let hand_budget = (d * d - arm_step * arm_step).max(0.0).sqrt();
        let problem = Problem {
            chain,
            terms: &terms,
            active: &hand,
            ball: (t > 0).then_some((&q_prev, hand_budget)),
        };
        let sol = problem.solve(&q, &cfg.solver);
        let q = sol.q;
        let (ep, er) = pose_error(chain, wrist, &target, &q);
        residuals.push(sol.objective + ep.norm_squared() + er.norm_squared());
        converged.push(ik_ok && sol.converged);
        q_prev = q.clone();
        configs.push(q);
    }
    Ok(JointTrajectory::from_configs(chain.name(), configs, residuals, converged))
}

/// Position error and rotation vector taking the wrist frame to `target`.
fn pose_error(chain: &KinematicChain, wrist: usize, target: &RigidTransform, q: &JointConfig) -> (Vec3, Vec3) {
    let pose = chain.frames(q).expect("config has chain dof").keypoint_pose(wrist);
    let ep = target.translation() - pose.translation();
    let er = (target.rotation() * pose.rotation().inverse()).scaled_axis();
    (ep, er)
}

/// Damped least-squares IK on the arm joints, hand joints held fixed.
fn arm_ik(
    chain: &KinematicChain,
    cfg: &RetargetConfig,
    wrist: usize,
    arm: &[usize],
    target: &RigidTransform,
    start: &JointConfig,
) -> (JointConfig, bool) {
    let mut q = start.clone();
    if arm.is_empty() {
        return (q, true);
    }
    let lambda2 = cfg.ik_damping * cfg.ik_damping;
    for _ in 0..cfg.solver.max_iters {
        let (ep, er) = pose_error(chain, wrist, target, &q);
        let e = DVector::from_iterator(6, ep.iter().chain(er.iter()).copied());
        if e.norm_squared() <= cfg.solver.residual_tol {
            return (q, true);
        }
        let jac = chain.frames(&q).expect("config has chain dof").frame_jacobian(wrist).select_columns(arm);
        let mut jjt = &jac * jac.transpose();
        for i in 0..6 {
            jjt[(i, i)] += lambda2;
        }
        let Some(sol) = jjt.cholesky().map(|c| c.solve(&e)) else {
            return (q, false);
        };
        let delta = jac.transpose() * sol;
        for (k, &j) in arm.iter().enumerate() {
            q.0[j] = chain.joints()[j].clamp(q.0[j] + delta[k]);
        }
        if delta.norm() < 1e-14 {
            return (q, true);
        }
    }
    (q, false)
}
