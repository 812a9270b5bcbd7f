use super::*;
use crate::kinematics::{Joint, JointKind, Keypoint};
use crate::trajectory::{human_hand_chain, synth_demo, DemoFrame, SynthSpec};
use crate::transform::RigidTransform;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ALPHA: f64 = 1.6;

fn matched_chain() -> KinematicChain {
    human_hand_chain().scaled(ALPHA, "matched")
}

fn matched_cfg(chain: &KinematicChain) -> RetargetConfig {
    RetargetConfig {
        alpha: ALPHA,
        correspondence: Correspondence::identity(chain),
        ..RetargetConfig::default()
    }
}

/// Slow closing so the matched hand never needs more than `d` per frame.
fn gentle_spec() -> SynthSpec {
    SynthSpec {
        close_frames: 40,
        ..SynthSpec::default()
    }
}

/// Robot configuration reproducing a human configuration exactly: the
/// wrist slides land on `alpha (w - o) + o`, every angle is copied.
fn matched_config(human_q: &JointConfig, object: &Vec3) -> JointConfig {
    let mut q = human_q.clone();
    for k in 0..3 {
        q.0[k] = ALPHA * (human_q.0[k] - object[k]) + object[k];
    }
    q
}

fn human_pose(seed: u64) -> JointConfig {
    let chain = human_hand_chain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = JointConfig::zeros(chain.dof());
    q.0[0] = rng.random_range(0.3..0.5);
    q.0[1] = rng.random_range(-0.1..0.1);
    q.0[2] = rng.random_range(0.05..0.2);
    q.0[3] = rng.random_range(-0.5..0.5);
    for j in 4..chain.dof() {
        q.0[j] = rng.random_range(0.0..1.2);
    }
    q
}

fn keypoints(chain: &KinematicChain, q: &JointConfig) -> Vec<Vec3> {
    let f = chain.frames(q).unwrap();
    (0..chain.keypoints().len()).map(|k| f.keypoint_position(k)).collect()
}

#[test]
fn zero_residual_fixed_point() {
    let robot = matched_chain();
    let cfg = matched_cfg(&robot);
    let hq = human_pose(1);
    let o = Vec3::new(0.42, 0.03, 0.035);
    let h = keypoints(&human_hand_chain(), &hq);
    let q_prev = matched_config(&hq, &o);
    let (q, res, ok) = retarget_frame(&robot, &cfg, &h, &o, &q_prev).unwrap();
    assert!(res <= 1e-10, "{res}");
    assert!(ok);
    assert_eq!(q, q_prev);
}

fn single_revolute() -> KinematicChain {
    KinematicChain::new(
        "one".into(),
        vec!["base".into(), "arm".into()],
        vec![Joint {
            name: "j".into(),
            kind: JointKind::Revolute,
            parent_link: "base".into(),
            child_link: "arm".into(),
            origin: RigidTransform::identity(),
            axis: Vec3::z(),
            limits: (-3.0, 3.0),
        }],
        vec![Keypoint {
            id: "tip".into(),
            link: "arm".into(),
            offset: RigidTransform::from_translation(Vec3::x()),
        }],
        vec![],
        None,
    )
    .unwrap()
}

fn planar_two_link() -> KinematicChain {
    let joint = |name: &str, parent: &str, child: &str, x: f64| Joint {
        name: name.into(),
        kind: JointKind::Revolute,
        parent_link: parent.into(),
        child_link: child.into(),
        origin: RigidTransform::from_translation(Vec3::new(x, 0.0, 0.0)),
        axis: Vec3::z(),
        limits: (-4.0, 4.0),
    };
    KinematicChain::new(
        "two".into(),
        vec!["base".into(), "upper".into(), "lower".into()],
        vec![joint("shoulder", "base", "upper", 0.0), joint("elbow", "upper", "lower", 1.0)],
        vec![Keypoint {
            id: "tip".into(),
            link: "lower".into(),
            offset: RigidTransform::from_translation(Vec3::x()),
        }],
        vec![],
        None,
    )
    .unwrap()
}

fn tip_cfg(chain: &KinematicChain, d: f64) -> RetargetConfig {
    RetargetConfig {
        alpha: 1.0,
        correspondence: Correspondence::standard(chain, &[(0, "tip")]),
        step_limit_d: d,
        ..RetargetConfig::default()
    }
}

/// Planar two-link tip, written out independently of the chain code.
fn two_link_tip(a: f64, b: f64) -> (f64, f64) {
    (a.cos() + (a + b).cos(), a.sin() + (a + b).sin())
}

#[test]
fn one_dof_step_bound_is_active() {
    let chain = single_revolute();
    let cfg = tip_cfg(&chain, 0.1);
    let target = vec![Vec3::new(0.5f64.cos(), 0.5f64.sin(), 0.0)];
    let q_prev = JointConfig::zeros(1);
    let (q, res, _) = retarget_frame(&chain, &cfg, &target, &Vec3::zeros(), &q_prev).unwrap();
    assert!((q.0[0].abs() - 0.1).abs() < 1e-12, "{}", q.0[0]);
    // 1-D grid over the feasible interval
    let objective = |x: f64| (x.cos() - target[0].x).powi(2) + (x.sin() - target[0].y).powi(2);
    let (mut best_x, mut best) = (0.0, f64::INFINITY);
    for i in -1000..=1000 {
        let x = 0.1 * i as f64 / 1000.0;
        if objective(x) < best {
            best = objective(x);
            best_x = x;
        }
    }
    assert!((q.0[0] - best_x).abs() <= 1e-4);
    assert!(res <= best + 1e-12);
}

#[test]
fn two_link_matches_grid_search() {
    let chain = planar_two_link();
    let cfg = tip_cfg(&chain, 10.0);
    let target = Vec3::new(1.2, 0.8, 0.0);
    let q_prev = JointConfig::new(vec![0.3, 0.5]);
    let (_, res, ok) = retarget_frame(&chain, &cfg, &[target], &Vec3::zeros(), &q_prev).unwrap();
    assert!(ok);
    let mut best = f64::INFINITY;
    let n = 6283;
    for i in 0..n {
        let a = -std::f64::consts::PI + i as f64 * 1e-3;
        for j in 0..n {
            let b = -std::f64::consts::PI + j as f64 * 1e-3;
            let (x, y) = two_link_tip(a, b);
            best = best.min((x - target.x).powi(2) + (y - target.y).powi(2));
        }
    }
    // reachable target: the grid minimum is within grid tolerance of zero
    assert!(res <= best + 1e-4, "solver {res} grid {best}");
    assert!(res < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ball_constrained_optimum_beats_grid(
        tx in -2.2f64..2.2, ty in -2.2f64..2.2,
        a0 in -2.0f64..2.0, b0 in -2.0f64..2.0,
        d in 0.05f64..0.4,
    ) {
        let chain = planar_two_link();
        let cfg = tip_cfg(&chain, d);
        let target = Vec3::new(tx, ty, 0.0);
        let q_prev = JointConfig::new(vec![a0, b0]);
        let (q, res, _) = retarget_frame(&chain, &cfg, &[target], &Vec3::zeros(), &q_prev).unwrap();
        prop_assert!((&q.0 - &q_prev.0).norm() <= d + 1e-12);
        let steps = (d / 1e-3).ceil() as i64;
        let mut best = f64::INFINITY;
        for i in -steps..=steps {
            for j in -steps..=steps {
                let (da, db) = (i as f64 * 1e-3, j as f64 * 1e-3);
                if da * da + db * db > d * d {
                    continue;
                }
                let (x, y) = two_link_tip(a0 + da, b0 + db);
                best = best.min((x - tx).powi(2) + (y - ty).powi(2));
            }
        }
        prop_assert!(res <= best + 1e-4, "solver {} grid {}", res, best);
    }
}

#[test]
fn static_demo_gives_zero_actions() {
    let robot = matched_chain();
    let cfg = matched_cfg(&robot);
    let mut demo = synth_demo(&SynthSpec::default(), 3).unwrap();
    let first = demo.frames[0].clone();
    demo.frames = vec![first; 12];
    demo.lift_index = None;
    let jt0 = retarget_trajectory(&robot, &cfg, &demo, &JointConfig::zeros(robot.dof())).unwrap();
    assert!(jt0.residuals[0] <= 1e-10, "{}", jt0.residuals[0]);
    let jt = retarget_trajectory(&robot, &cfg, &demo, &jt0.configs[0]).unwrap();
    assert!(jt.primitive_actions.iter().all(|a| a.iter().all(|&v| v == 0.0)));
}

#[test]
fn matched_morphology_is_exact() {
    let robot = matched_chain();
    let cfg = matched_cfg(&robot);
    let demo = synth_demo(&gentle_spec(), 11).unwrap();
    let jt = retarget_trajectory(&robot, &cfg, &demo, &JointConfig::zeros(robot.dof())).unwrap();
    jt.check(&robot, cfg.step_limit_d).unwrap();
    assert!(jt.max_residual() <= 1e-6, "max residual {}", jt.max_residual());
}

#[test]
fn teleport_keeps_constraint_and_spikes_residual() {
    let robot = matched_chain();
    let cfg = matched_cfg(&robot);
    let mut demo = synth_demo(&gentle_spec(), 5).unwrap();
    let k = 8;
    let jump = Vec3::new(0.25, 0.0, 0.0);
    for f in &mut demo.frames[k..] {
        for p in &mut f.hand_keypoints {
            *p += jump;
        }
        f.wrist_pose = RigidTransform::from_translation(jump).compose(&f.wrist_pose);
        f.object_pose = RigidTransform::from_translation(jump).compose(&f.object_pose);
    }
    let jt = retarget_trajectory(&robot, &cfg, &demo, &JointConfig::zeros(robot.dof())).unwrap();
    jt.check(&robot, cfg.step_limit_d).unwrap();
    let before = jt.residuals[..k].iter().copied().fold(0.0, f64::max);
    assert!(jt.residuals[k] > 1e-3, "{}", jt.residuals[k]);
    assert!(jt.residuals[k] > 1e4 * before.max(1e-12));
    assert!(jt.residuals[k] >= jt.residuals[k + 1]);
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let robot = matched_chain();
    let cfg = matched_cfg(&robot);
    let demo = synth_demo(&SynthSpec::default(), 2).unwrap();
    let q0 = JointConfig::zeros(robot.dof());
    let a = retarget_trajectory(&robot, &cfg, &demo, &q0).unwrap();
    let b = retarget_trajectory(&robot, &cfg, &demo, &q0).unwrap();
    assert_eq!(a, b);
}

/// Shifting the hand, the object and the robot's prismatic base by one
/// vector leaves the objective and the solved joint angles unchanged.
#[test]
fn translation_equivariance_with_sliding_base() {
    let robot = matched_chain();
    let cfg = matched_cfg(&robot);
    let hq = human_pose(4);
    let o = Vec3::new(0.4, -0.02, 0.035);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h: Vec<Vec3> = keypoints(&human_hand_chain(), &hq)
        .into_iter()
        .map(|p| p + Vec3::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01), 0.0))
        .collect();
    let mut q_prev = matched_config(&hq, &o);
    for j in 4..robot.dof() {
        q_prev.0[j] = (q_prev.0[j] - 0.1).max(0.0);
    }
    let v = Vec3::new(0.05, -0.07, 0.02);
    let h2: Vec<Vec3> = h.iter().map(|p| p + v).collect();
    let mut q_prev2 = q_prev.clone();
    for k in 0..3 {
        q_prev2.0[k] += v[k];
    }
    let (q1, r1, _) = retarget_frame(&robot, &cfg, &h, &o, &q_prev).unwrap();
    let (q2, r2, _) = retarget_frame(&robot, &cfg, &h2, &(o + v), &q_prev2).unwrap();
    assert!(r1 > 1e-6);
    assert!((r1 - r2).abs() <= 1e-9, "{r1} {r2}");
    for j in 0..robot.dof() {
        let shift = if j < 3 { v[j] } else { 0.0 };
        assert!((q2.0[j] - q1.0[j] - shift).abs() <= 1e-9, "joint {j}");
    }
}

#[test]
fn vector_decouples_arm_from_fingers() {
    let robot = matched_chain();
    let cfg = matched_cfg(&robot);
    let spec = gentle_spec();
    let mut demo = synth_demo(&spec, 6).unwrap();
    let start = spec.reach_frames;
    demo.frames = demo.frames[start..start + spec.close_frames].to_vec();
    demo.lift_index = None;
    let jt = vector_retarget(&robot, &cfg, &demo, &JointConfig::zeros(robot.dof())).unwrap();
    let arm = robot.arm_joints();
    let last = jt.configs.last().unwrap();
    for t in 1..jt.len() {
        for &j in &arm {
            assert_eq!(jt.configs[t].0[j], jt.configs[0].0[j], "arm joint {j} moved at {t}");
        }
    }
    let hand_change: f64 = (4..robot.dof()).map(|j| (last.0[j] - jt.configs[0].0[j]).abs()).sum();
    assert!(hand_change > 0.5);
}

#[test]
fn vector_and_pairwise_are_exact_on_matched_hand() {
    let robot = matched_chain();
    let cfg = matched_cfg(&robot);
    let demo = synth_demo(&gentle_spec(), 12).unwrap();
    let q0 = JointConfig::zeros(robot.dof());
    for jt in [
        vector_retarget(&robot, &cfg, &demo, &q0).unwrap(),
        dexpilot_retarget(&robot, &cfg, &demo, &q0).unwrap(),
    ] {
        jt.check(&robot, cfg.step_limit_d).unwrap();
        assert!(jt.max_residual() <= 1e-6, "{}", jt.max_residual());
    }
}

#[test]
fn pure_wrist_translation_keeps_vectors() {
    // a larger robot hand cannot match exactly, so the solution is non-trivial
    let robot = human_hand_chain().scaled(ALPHA * 1.15, "large");
    let cfg = matched_cfg(&robot);
    let base = synth_demo(&SynthSpec::default(), 9).unwrap();
    let f0 = base.frames[SynthSpec::default().reach_frames + 10].clone();
    let mut demo = base.clone();
    demo.frames = (0..15)
        .map(|i| {
            let shift = RigidTransform::from_translation(Vec3::new(0.004 * i as f64, -0.003 * i as f64, 0.002 * i as f64));
            DemoFrame {
                hand_keypoints: f0.hand_keypoints.iter().map(|p| shift.transform_point(p)).collect(),
                wrist_pose: shift.compose(&f0.wrist_pose),
                object_pose: f0.object_pose,
            }
        })
        .collect();
    demo.lift_index = None;
    let jt = vector_retarget(&robot, &cfg, &demo, &JointConfig::zeros(robot.dof())).unwrap();
    let w = robot.wrist_index().unwrap();
    let vectors = |t: usize| {
        let k = keypoints(&robot, &jt.configs[t]);
        robot.fingertip_indices().iter().map(|&i| k[i] - k[w]).collect::<Vec<_>>()
    };
    let v0 = vectors(0);
    for t in 1..jt.len() {
        for (a, b) in vectors(t).iter().zip(&v0) {
            assert!((a - b).norm() <= 1e-4, "frame {t}: {}", (a - b).norm());
        }
    }
}

#[test]
fn zero_pair_weight_equals_vector() {
    let robot = human_hand_chain().scaled(ALPHA * 1.1, "large");
    let cfg = RetargetConfig {
        pair_weight: 0.0,
        ..matched_cfg(&robot)
    };
    let demo = synth_demo(&SynthSpec::default(), 1).unwrap();
    let q0 = JointConfig::zeros(robot.dof());
    assert_eq!(
        dexpilot_retarget(&robot, &cfg, &demo, &q0).unwrap(),
        vector_retarget(&robot, &cfg, &demo, &q0).unwrap()
    );
}

/// Human pose with the thumb and index tips pinched together.
fn pinch_pose() -> (JointConfig, f64) {
    let chain = human_hand_chain();
    let mut best = (JointConfig::zeros(chain.dof()), f64::INFINITY);
    for i in 0..=60 {
        for j in 0..=60 {
            let mut q = JointConfig::zeros(chain.dof());
            q.0[0] = 0.4;
            q.0[2] = 0.1;
            for k in 0..3 {
                q.0[4 + k] = 1.5 * i as f64 / 60.0;
                q.0[7 + k] = 1.5 * j as f64 / 60.0;
            }
            let kp = keypoints(&chain, &q);
            let dist = (kp[4] - kp[8]).norm();
            if dist < best.1 {
                best = (q, dist);
            }
        }
    }
    best
}

#[test]
fn pairwise_terms_close_a_pinch() {
    let human = human_hand_chain();
    let (pinch, dist) = pinch_pose();
    assert!(dist < 0.01, "pinch distance {dist}");
    let frame = |q: &JointConfig| {
        let f = human.frames(q).unwrap();
        DemoFrame {
            hand_keypoints: keypoints(&human, q),
            wrist_pose: f.keypoint_pose(0),
            object_pose: RigidTransform::from_translation(Vec3::new(0.4, 0.0, 0.0)),
        }
    };
    let mut open = pinch.clone();
    for j in 4..human.dof() {
        open.0[j] = 0.0;
    }
    let mut demo = synth_demo(&SynthSpec::default(), 0).unwrap();
    demo.frames = (0..=30)
        .map(|i| {
            let u = i as f64 / 30.0;
            let q = JointConfig(&open.0 * (1.0 - u) + &pinch.0 * u);
            frame(&q)
        })
        .collect();
    demo.lift_index = None;
    let robot = human_hand_chain().scaled(ALPHA * 1.15, "large");
    let cfg = RetargetConfig {
        pair_weight: 4.0,
        ..matched_cfg(&robot)
    };
    let jt = dexpilot_retarget(&robot, &cfg, &demo, &JointConfig::zeros(robot.dof())).unwrap();
    let k = keypoints(&robot, jt.configs.last().unwrap());
    let tips = robot.fingertip_indices();
    let robot_dist = (k[tips[0]] - k[tips[1]]).norm();
    assert!(robot_dist <= 1.2 * ALPHA * dist, "robot {robot_dist} scaled human {}", ALPHA * dist);
}

#[test]
fn joint_trajectory_file_round_trip() {
    let robot = matched_chain();
    let cfg = matched_cfg(&robot);
    let demo = synth_demo(&SynthSpec::default(), 2).unwrap();
    let jt = retarget_trajectory(&robot, &cfg, &demo, &JointConfig::zeros(robot.dof())).unwrap();
    let text = joint_trajectory_to_json(&jt, "position", &cfg);
    let (back, method, cfg2) = joint_trajectory_from_json(&text).unwrap();
    assert_eq!(back, jt);
    assert_eq!(method, "position");
    assert_eq!(cfg2, cfg);
}

#[test]
fn config_validation() {
    let robot = matched_chain();
    let mut cfg = matched_cfg(&robot);
    cfg.step_limit_d = 0.0;
    assert!(cfg.validate().is_err());
    let mut cfg = matched_cfg(&robot);
    cfg.correspondence.clear();
    assert!(cfg.validate().is_err());
    let mut cfg = matched_cfg(&robot);
    cfg.correspondence[0].robot = "nope".into();
    let demo = synth_demo(&SynthSpec::default(), 2).unwrap();
    assert!(matches!(
        retarget_trajectory(&robot, &cfg, &demo, &JointConfig::zeros(robot.dof())),
        Err(RetargetError::Kinematics(_))
    ));
}
