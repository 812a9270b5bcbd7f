use super::*;
use crate::retarget::{retarget_trajectory, Correspondence};
use crate::trajectory::{human_hand_chain, synth_demo, SynthSpec};
use proptest::prelude::*;

const ALPHA: f64 = 1.6;

fn spec_with(cfg: EnvConfig) -> EnvSpec {
    let chain = human_hand_chain().scaled(ALPHA, "matched");
    let shape = SynthSpec::default().shape;
    EnvSpec {
        chain: Arc::new(chain),
        object: Arc::new(shape.scaled(ALPHA).to_model("sphere", ALPHA, 3000)),
        cfg,
        reward: RewardParams::default(),
        alpha: ALPHA,
        step_limit: 0.15,
    }
}

fn noiseless() -> EnvConfig {
    EnvConfig {
        detection_noise: 0.0,
        // just above the scaled grasp gap so contact comes at full closure
        contact_radius: ALPHA * demo_spec().grasp_gap + 0.0003,
        ..EnvConfig::default()
    }
}

fn demo_spec() -> SynthSpec {
    SynthSpec {
        close_frames: 40,
        lift_frames: 6,
        grasp_gap: 0.006,
        ..SynthSpec::default()
    }
}

fn retargeted(spec: &EnvSpec, demo: &DemoTrajectory) -> JointTrajectory {
    let cfg = RetargetConfig {
        alpha: ALPHA,
        correspondence: Correspondence::identity(&spec.chain),
        ..RetargetConfig::default()
    };
    retarget_trajectory(&spec.chain, &cfg, demo, &JointConfig::zeros(spec.chain.dof())).unwrap()
}

fn setup(cfg: EnvConfig, seed: u64) -> (EnvSpec, DemoTrajectory, JointTrajectory) {
    let spec = spec_with(cfg);
    let demo = synth_demo(&demo_spec(), seed).unwrap();
    let jt = retargeted(&spec, &demo);
    (spec, demo, jt)
}

#[test]
fn reset_starts_clean() {
    let (spec, demo, jt) = setup(EnvConfig::default(), 1);
    let (env, obs) = GraspEnv::reset(&spec, &demo, &jt, 7).unwrap();
    assert_eq!(env.state().t, 0);
    assert_eq!(env.state().contacts, [false; 5]);
    assert!(!env.state().attached);
    assert_eq!(env.state().q, jt.configs[0]);
    assert_eq!(obs.len(), spec.cfg.observation_len(spec.chain.dof()));
}

#[test]
fn noise_is_frozen_by_seed() {
    let (spec, demo, jt) = setup(EnvConfig::default(), 1);
    let (_, a) = GraspEnv::reset(&spec, &demo, &jt, 7).unwrap();
    let (_, b) = GraspEnv::reset(&spec, &demo, &jt, 7).unwrap();
    let (_, c) = GraspEnv::reset(&spec, &demo, &jt, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(detection_offsets(3, 21, 0.005), detection_offsets(3, 21, 0.005));
}

#[test]
fn length_mismatch_is_rejected() {
    let (spec, demo, mut jt) = setup(EnvConfig::default(), 1);
    jt.configs.pop();
    assert!(matches!(
        GraspEnv::reset(&spec, &demo, &jt, 0),
        Err(EnvError::LengthMismatch { .. })
    ));
}

#[test]
fn closed_first_frame_has_contacts() {
    let (spec, mut demo, _) = setup(noiseless(), 2);
    let s = demo_spec();
    demo.frames.drain(..s.reach_frames + s.close_frames);
    demo.lift_index = demo.detect_lift_index();
    let jt = retargeted(&spec, &demo);
    let (env, _) = GraspEnv::reset(&spec, &demo, &jt, 0).unwrap();
    assert!(env.state().contacts.iter().filter(|&&c| c).count() >= 4, "{:?}", env.state().contacts);
}

#[test]
fn zero_action_changes_only_time() {
    let (spec, demo, jt) = setup(EnvConfig::default(), 1);
    let (mut env, _) = GraspEnv::reset(&spec, &demo, &jt, 3).unwrap();
    let before = env.state().clone();
    env.step(&DVector::zeros(spec.chain.dof())).unwrap();
    let after = env.state();
    assert_eq!(after.t, 1);
    assert_eq!(after.q, before.q);
    assert_eq!(after.object_pose, before.object_pose);
    assert_eq!(after.contacts, before.contacts);
}

fn replay(env: &mut GraspEnv) -> Vec<StepInfo> {
    let mut infos = Vec::new();
    while !env.state().terminated {
        let a = env.primitive_action();
        infos.push(env.step(&a).unwrap().info);
    }
    infos
}

#[test]
fn scripted_replay_attaches_near_lift() {
    for seed in 0..4 {
        let (spec, demo, jt) = setup(noiseless(), seed);
        let (mut env, _) = GraspEnv::reset(&spec, &demo, &jt, 0).unwrap();
        let infos = replay(&mut env);
        let attach = infos.iter().position(|i| i.attached_now).expect("attaches") + 1;
        let lift = demo.lift_index.unwrap();
        assert!(attach.abs_diff(lift) <= 3, "seed {seed}: attach {attach} lift {lift}");
        assert!(infos.last().unwrap().success);
    }
}

#[test]
fn opening_the_hand_drops_the_object() {
    let (spec, demo, jt) = setup(noiseless(), 3);
    let (mut env, _) = GraspEnv::reset(&spec, &demo, &jt, 0).unwrap();
    let lift = demo.lift_index.unwrap();
    while env.state().t < lift + 3 {
        let a = env.primitive_action();
        env.step(&a).unwrap();
    }
    assert!(env.state().attached);
    let mut open = DVector::zeros(spec.chain.dof());
    for j in 4..spec.chain.dof() {
        open[j] = -0.5;
    }
    let mut detached = false;
    for _ in 0..10 {
        if env.step(&open).unwrap().info.detached_now {
            detached = true;
            break;
        }
    }
    assert!(detached);
    let mut z = env.state().object_pose.translation().z;
    let mut falls = 0;
    while z > demo.frames[0].object_position().z && !env.state().terminated {
        env.step(&open).unwrap();
        assert!(!env.state().attached);
        let nz = env.state().object_pose.translation().z;
        assert!(nz < z, "{nz} after {z}");
        z = nz;
        falls += 1;
    }
    assert!(falls >= 1);
    assert_eq!(z, demo.frames[0].object_position().z);
}

#[test]
fn relative_tip_block_and_padding() {
    let (spec, demo, jt) = setup(EnvConfig::default(), 4);
    let (mut env, _) = GraspEnv::reset(&spec, &demo, &jt, 0).unwrap();
    let tip0 = env.fingertips()[0];
    let base = DESCRIPTOR_LEN + 7 + spec.chain.dof();
    env.state.object_pose = RigidTransform::from_translation(tip0 - Vec3::new(0.1, 0.0, 0.0));
    let obs = env.observe();
    assert!((obs[base] - 0.1).abs() < 1e-12 && obs[base + 1].abs() < 1e-12 && obs[base + 2].abs() < 1e-12);
    env.state.object_pose = RigidTransform::from_translation(tip0);
    assert!(env.observe()[base..base + 3].iter().all(|v| v.abs() < 1e-12));

    env.state.t = demo.len() - 1;
    let obs = env.observe();
    let goal = base + 15 + 5;
    let h = spec.cfg.horizon;
    for k in 1..h {
        assert_eq!(obs[goal..goal + 15], obs[goal + 15 * k..goal + 15 * (k + 1)]);
    }
    let objs = goal + 15 * h;
    for k in 1..h {
        assert_eq!(obs[objs..objs + 3], obs[objs + 3 * k..objs + 3 * (k + 1)]);
    }
}

#[test]
fn masked_contacts_are_zero() {
    let cfg = EnvConfig {
        observe_contacts: false,
        ..noiseless()
    };
    let (spec, demo, jt) = setup(cfg, 2);
    let (mut env, _) = GraspEnv::reset(&spec, &demo, &jt, 0).unwrap();
    let lift = demo.lift_index.unwrap();
    while env.state().t < lift {
        let a = env.primitive_action();
        env.step(&a).unwrap();
    }
    assert!(env.state().contacts.iter().any(|&c| c));
    let off = DESCRIPTOR_LEN + 7 + spec.chain.dof() + 15;
    assert!(env.observe()[off..off + 5].iter().all(|&v| v == 0.0));
}

#[test]
fn trace_round_trip() {
    let (spec, demo, jt) = setup(noiseless(), 1);
    let (mut env, _) = GraspEnv::reset(&spec, &demo, &jt, 0).unwrap();
    env.record_trace();
    replay(&mut env);
    let trace = env.take_trace().unwrap();
    assert_eq!(trace.frames.len(), demo.len());
    assert_eq!(EpisodeTrace::from_json(&trace.to_json()).unwrap(), trace);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_actions_respect_constraints(seed in 0u64..1000, scale in 0.01f64..3.0) {
        use rand::{Rng, SeedableRng};
        let (spec, demo, jt) = setup(EnvConfig::default(), seed % 3);
        let (mut env, first) = GraspEnv::reset(&spec, &demo, &jt, seed).unwrap();
        let (mut twin, _) = GraspEnv::reset(&spec, &demo, &jt, seed).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dof = spec.chain.dof();
        let mut attached_ok = false;
        while !env.state().terminated {
            let noise = DVector::from_fn(dof, |_, _| rng.random_range(-scale..scale));
            let a = env.primitive_action() + noise;
            let q0 = env.state().q.clone();
            let out = env.step(&a).unwrap();
            twin.step(&a).unwrap();
            prop_assert_eq!(env.state(), twin.state());
            let dq = (&env.state().q.0 - &q0.0).norm();
            prop_assert!(dq <= spec.step_limit + 1e-12);
            prop_assert!(spec.chain.within_limits(&env.state().q, 0.0));
            prop_assert_eq!(out.observation.len(), first.len());
            if out.info.attached_now { attached_ok = true; }
            if out.info.detached_now { attached_ok = false; }
            prop_assert_eq!(env.state().attached, attached_ok);
        }
    }
}
