use super::*;
use crate::env::TraceFrame;
use crate::retarget::RetargetConfig;
use crate::task::{claw_chain, claw_correspondence, synth_suite, Region, SuiteConfig};
use crate::transform::{PoseRecord, RigidTransform, Vec3};
use crate::trajectory::{synth_demo, SynthSpec};

fn demo() -> DemoTrajectory {
    synth_demo(&SynthSpec::default(), 4).unwrap()
}

/// Trace whose object sits on the demo path shifted by `offset`, attached
/// from frame `attach` on.
fn trace_following(demo: &DemoTrajectory, offset: Vec3, attach: Option<usize>) -> EpisodeTrace {
    let support_z = demo.frames[0].object_position().z;
    let frames = demo
        .frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let pose = RigidTransform::new(*f.object_pose.rotation(), f.object_pose.translation() + offset);
            let attached = attach.is_some_and(|a| t >= a);
            TraceFrame {
                t,
                q: vec![],
                object_pose: PoseRecord::from(&pose),
                contacts: [attached; 5],
                attached,
                reward: 0.0,
                attached_now: attach == Some(t),
                detached_now: false,
                dropped: false,
            }
        })
        .collect();
    EpisodeTrace {
        demo_len: demo.len(),
        support_z,
        frames,
    }
}

fn judge(trace: &EpisodeTrace, demo: &DemoTrajectory) -> Result<EpisodeOutcome, EvalError> {
    judge_episode(trace, demo, &EnvConfig::default(), &RewardParams::default())
}

#[test]
fn never_attached_is_not_grasped() {
    let d = demo();
    let o = judge(&trace_following(&d, Vec3::zeros(), None), &d).unwrap();
    assert!(!o.grasped && !o.followed);
}

#[test]
fn perfect_tracking_has_zero_error() {
    let d = demo();
    let lift = d.lift_index.unwrap();
    let o = judge(&trace_following(&d, Vec3::zeros(), Some(lift - 3)), &d).unwrap();
    assert!(o.grasped && o.followed);
    let t0 = lift - RewardParams::default().t0_offset;
    assert_eq!(o.position_errors.len(), d.len() - t0);
    assert!(o.position_errors.iter().all(|&e| e == 0.0));
    assert!(o.rotation_errors.iter().all(|&e| e < 1e-7));
    let r = EvalReport::from_outcomes(&[("a".into(), o)]);
    assert_eq!(r.sr_follow, 1.0);
    assert_eq!(r.e_p, Some(0.0));
}

#[test]
fn constant_offset_gives_constant_error() {
    let d = demo();
    let lift = d.lift_index.unwrap();
    let o = judge(&trace_following(&d, Vec3::new(0.03, 0.0, 0.0), Some(lift - 3)), &d).unwrap();
    assert!(o.followed);
    let r = EvalReport::from_outcomes(&[("a".into(), o)]);
    assert!((r.e_p.unwrap() - 0.03).abs() < 1e-12);
}

#[test]
fn release_or_drift_is_not_followed() {
    let d = demo();
    let lift = d.lift_index.unwrap();
    let mut t = trace_following(&d, Vec3::zeros(), Some(lift - 3));
    let n = t.frames.len();
    t.frames[n - 2].attached = false;
    t.frames[n - 2].detached_now = true;
    let o = judge(&t, &d).unwrap();
    assert!(o.grasped && !o.followed);

    let far = trace_following(&d, Vec3::new(0.0, 0.2, 0.0), Some(lift - 3));
    let o = judge(&far, &d).unwrap();
    assert!(o.grasped && !o.followed);
}

#[test]
fn truncated_traces_are_rejected() {
    let d = demo();
    let mut t = trace_following(&d, Vec3::zeros(), None);
    t.frames.truncate(10);
    assert!(matches!(judge(&t, &d), Err(EvalError::Truncated(_))));
    t.frames.clear();
    assert!(matches!(judge(&t, &d), Err(EvalError::Truncated(_))));
}

#[test]
fn report_aggregates_per_object() {
    let d = demo();
    let lift = d.lift_index.unwrap();
    let good = judge(&trace_following(&d, Vec3::new(0.01, 0.0, 0.0), Some(lift - 3)), &d).unwrap();
    let none = judge(&trace_following(&d, Vec3::zeros(), None), &d).unwrap();
    let r = EvalReport::from_outcomes(&[("a".into(), good.clone()), ("b".into(), none), ("a".into(), good)]);
    assert_eq!(r.episodes, 3);
    assert!((r.sr_grasp - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(r.per_object["a"].sr_follow, 1.0);
    assert_eq!(r.per_object["b"].sr_grasp, 0.0);
    assert!((r.e_p.unwrap() - 0.01).abs() < 1e-12);
    assert!(r.to_tsv().starts_with("scope\tepisodes"));
    let empty = EvalReport::from_outcomes(&[]);
    assert_eq!((empty.sr_grasp, empty.e_p), (0.0, None));
}

/// Loose grasp tolerances under which noiseless replay always succeeds.
fn task(noise: f64) -> Task {
    let alpha = 1.6;
    let chain = claw_chain(alpha);
    let suite = synth_suite(
        &SuiteConfig {
            demos_per_shape: 2,
            surface_points: 600,
            synth: SynthSpec { grasp_gap: 0.006, ..SynthSpec::default() },
            ..SuiteConfig::default()
        },
        &Region {
            x: [0.4, 0.5],
            y: [-0.05, 0.05],
        },
        3,
    )
    .unwrap();
    let retarget = RetargetConfig {
        alpha,
        correspondence: claw_correspondence(&chain),
        ..RetargetConfig::default()
    };
    Task::new(
        chain,
        suite.into_iter().map(|d| (d.demo, d.object)).collect(),
        EnvConfig {
            detection_noise: noise,
            contact_radius: 0.012,
            ..EnvConfig::default()
        },
        RewardParams::default(),
        retarget,
    )
    .unwrap()
}

#[test]
fn noiseless_replay_succeeds_and_idle_fails() {
    let t = task(0.0);
    let cmp = compare(&[Actor::Replay(RetargetMethod::Position), Actor::Idle], &t, &[0]).unwrap();
    let replay = &cmp.rows[0].1;
    assert_eq!(replay.sr_grasp, 1.0, "{}", cmp.render());
    assert_eq!(replay.sr_follow, 1.0, "{}", cmp.render());
    assert_eq!(cmp.rows[1].1.sr_grasp, 0.0);
    assert_eq!(cmp.rows[1].0, "idle");
}

#[test]
fn evaluation_is_deterministic() {
    let t = task(0.005);
    let a = evaluate(&Actor::Replay(RetargetMethod::Position), &t, &[1, 2]).unwrap();
    let b = evaluate(&Actor::Replay(RetargetMethod::Position), &t, &[1, 2]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.episodes, 12);
    assert!(evaluate(&Actor::Idle, &t, &[]).is_err());
}

#[test]
fn episode_seeds_differ() {
    assert_ne!(episode_seed(0, 0), episode_seed(0, 1));
    assert_ne!(episode_seed(0, 0), episode_seed(1, 0));
    assert_eq!(episode_seed(5, 3), episode_seed(5, 3));
}

