use super::*;
use crate::env::{EnvConfig, GraspEnv};
use crate::retarget::RetargetConfig;
use crate::reward::RewardParams;
use crate::task::{claw_chain, claw_correspondence, synth_suite, Region, SuiteConfig, Task};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> PolicyConfig {
    PolicyConfig {
        hidden: vec![16, 12],
        num_envs: 2,
        rollout_length: 8,
        minibatch_size: 8,
        total_steps: 32,
        eval_interval: 1,
        ..PolicyConfig::default()
    }
}

fn small_policy(seed: u64, obs_dim: usize, act_dim: usize) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales = (0..act_dim).map(|j| 0.05 + 0.01 * j as f64).collect();
    let mut p = Policy::new(&small_config(), obs_dim, scales, &mut rng).unwrap();
    // larger output layer so the density and gradients are not trivially flat
    for v in &mut p.actor.params {
        *v += 0.3 * rng.random_range(-1.0..1.0);
    }
    p
}

fn toy_task(demos_per_shape: usize, noise: f64) -> Task {
    let alpha = 1.6;
    let chain = claw_chain(alpha);
    let suite = synth_suite(
        &SuiteConfig {
            demos_per_shape,
            surface_points: 300,
            ..SuiteConfig::default()
        },
        &Region {
            x: [0.4, 0.5],
            y: [-0.05, 0.05],
        },
        11,
    )
    .unwrap();
    let retarget = RetargetConfig {
        alpha,
        correspondence: claw_correspondence(&chain),
        ..RetargetConfig::default()
    };
    let env = EnvConfig {
        detection_noise: noise,
        ..EnvConfig::default()
    };
    Task::new(
        chain,
        suite.into_iter().map(|d| (d.demo, d.object)).collect(),
        env,
        RewardParams::default(),
        retarget,
    )
    .unwrap()
}

#[test]
fn zero_network_mean_is_zero() {
    let mut p = small_policy(1, 6, 3);
    p.actor.params.iter_mut().for_each(|v| *v = 0.0);
    let a = p.act(&[0.3; 6], true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(a.residual, DVector::zeros(3));
}

#[test]
fn sampling_is_reproducible_and_checks_dimension() {
    let p = small_policy(2, 6, 3);
    let obs = [0.1, -0.2, 0.3, 0.0, 1.0, -1.0];
    let a = p.act(&obs, false, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = p.act(&obs, false, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a, b);
    assert!(matches!(
        p.act(&obs[..5], false, &mut ChaCha8Rng::seed_from_u64(5)),
        Err(PolicyError::Dimension { expected: 6, got: 5 })
    ));
}

#[test]
fn log_prob_matches_change_of_variables() {
    let p = small_policy(3, 6, 4);
    let obs = [0.5, -0.2, 0.1, 0.7, -1.0, 0.2];
    let mean = p.actor.forward(&p.normalizer.normalize(&obs));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let a = p.act(&obs, false, &mut rng).unwrap();
        // density of a: Gaussian density of atanh(a / s) over |da/du|
        let mut density = 1.0;
        for j in 0..4 {
            let s = p.scales[j];
            let y = a.residual[j] / s;
            let u = 0.5 * ((1.0 + y) / (1.0 - y)).ln();
            let sigma = p.log_std[j].exp();
            let g = (-(u - mean[j]).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            density *= g / (s * (1.0 - y * y));
        }
        assert!((a.log_prob - density.ln()).abs() < 1e-6, "{} vs {}", a.log_prob, density.ln());
    }
}

#[test]
fn compose_action_examples() {
    let ap = DVector::from_vec(vec![0.1, -0.1]);
    let ar = DVector::from_vec(vec![0.02, 0.03]);
    let a = compose_action(&ap, &ar).unwrap();
    assert!((a[0] - 0.12).abs() < 1e-15 && (a[1] + 0.07).abs() < 1e-15);
    assert_eq!(compose_action(&ap, &DVector::zeros(2)).unwrap(), ap);
    assert_eq!(compose_action(&DVector::zeros(2), &ar).unwrap(), ar);
    assert!(compose_action(&ap, &DVector::zeros(3)).is_err());
}

#[test]
fn config_validation() {
    assert!(PolicyConfig::default().validate().is_ok());
    for bad in [
        PolicyConfig { clip_ratio: 1.0, ..PolicyConfig::default() },
        PolicyConfig { residual_scale: 0.0, ..PolicyConfig::default() },
        PolicyConfig { hidden: vec![], ..PolicyConfig::default() },
        PolicyConfig { ablations: Ablations { horizon_phi: 0, ..Ablations::default() }, ..PolicyConfig::default() },
    ] {
        assert!(bad.validate().is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residuals_stay_within_scale(seed in 0u64..10_000, gain in 0.0f64..50.0, x in prop::collection::vec(-100.0f64..100.0, 6)) {
        let mut p = small_policy(seed, 6, 3);
        p.actor.params.iter_mut().for_each(|v| *v *= gain);
        p.log_std = vec![1.0; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for det in [true, false] {
            let a = p.act(&x, det, &mut rng).unwrap();
            for j in 0..3 {
                prop_assert!(a.residual[j].abs() <= p.scales[j]);
                prop_assert!(a.log_prob.is_finite() || a.residual[j].abs() == p.scales[j]);
            }
        }
    }
}

fn buffer_from(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64) -> RolloutBuffer {
    let n = rewards.len();
    RolloutBuffer {
        num_envs: 1,
        length: n,
        observations: vec![vec![]; n],
        actions: vec![vec![]; n],
        log_probs: vec![0.0; n],
        rewards: rewards.to_vec(),
        values: values.to_vec(),
        dones: dones.to_vec(),
        bootstrap: vec![bootstrap],
        advantages: None,
        returns: None,
    }
}

#[test]
fn advantage_examples() {
    let mut b = buffer_from(&[1.0], &[0.0], &[true], 5.0);
    compute_advantages(&mut b, 0.99, 0.95).unwrap();
    assert_eq!(b.advantages.unwrap(), vec![1.0]);

    let mut b = buffer_from(&[0.0; 4], &[0.0; 4], &[false, true, false, false], 0.0);
    compute_advantages(&mut b, 0.99, 0.95).unwrap();
    assert_eq!(b.advantages.unwrap(), vec![0.0; 4]);

    let mut b = buffer_from(&[1.0, 2.0, 3.0], &[0.0; 3], &[false, false, true], 0.0);
    compute_advantages(&mut b, 0.9, 1.0).unwrap();
    let adv = b.advantages.unwrap();
    let expect = [1.0 + 0.9 * 2.0 + 0.81 * 3.0, 2.0 + 0.9 * 3.0, 3.0];
    for k in 0..3 {
        assert!((adv[k] - expect[k]).abs() < 1e-12);
    }

    let mut short = buffer_from(&[1.0, 2.0], &[0.0], &[false, false], 0.0);
    assert!(matches!(compute_advantages(&mut short, 0.9, 1.0), Err(PolicyError::Incomplete(_))));
}

proptest! {
    #[test]
    fn advantages_match_direct_sum(
        rows in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, prop::bool::weighted(0.2)), 1..30),
        bootstrap in -1.0f64..1.0,
        gamma in 0.5f64..1.0,
        lambda in 0.0f64..1.0,
    ) {
        let r: Vec<f64> = rows.iter().map(|x| x.0).collect();
        let v: Vec<f64> = rows.iter().map(|x| x.1).collect();
        let d: Vec<bool> = rows.iter().map(|x| x.2).collect();
        let n = r.len();
        let mut b = buffer_from(&r, &v, &d, bootstrap);
        compute_advantages(&mut b, gamma, lambda).unwrap();
        let adv = b.advantages.unwrap();
        let next_v = |t: usize| if t + 1 < n { v[t + 1] } else { bootstrap };
        for t in 0..n {
            // sum_l (gamma lambda)^l delta_{t+l} up to and including the first done
            let mut sum = 0.0;
            let mut w = 1.0;
            for l in t..n {
                let live = if d[l] { 0.0 } else { 1.0 };
                sum += w * (r[l] + gamma * live * next_v(l) - v[l]);
                if d[l] { break; }
                w *= gamma * lambda;
            }
            prop_assert!((adv[t] - sum).abs() < 1e-9);
        }
    }
}

#[test]
fn surrogate_clipping() {
    let eps = 0.2;
    assert_eq!(clipped_surrogate(1.5, 2.0, eps), (1.2 * 2.0, 0.0));
    assert_eq!(clipped_surrogate(0.5, -1.0, eps).1, 0.0);
    assert_eq!(clipped_surrogate(1.1, 2.0, eps), (2.2, 2.0));
    // pessimistic side keeps the gradient
    assert_eq!(clipped_surrogate(0.5, 2.0, eps), (1.0, 2.0));
}

/// Buffer of `n` random transitions for `p` with ratios near 1.
fn random_buffer(p: &Policy, n: usize, seed: u64) -> (RolloutBuffer, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = RolloutBuffer {
        num_envs: 1,
        length: n,
        ..RolloutBuffer::default()
    };
    for _ in 0..n {
        let obs: Vec<f64> = (0..p.obs_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = p.act_normalized(&obs, false, &mut rng);
        b.log_probs.push(a.gauss_log_prob + rng.random_range(-0.1..0.1));
        b.observations.push(obs);
        b.actions.push(a.pre_squash);
        b.rewards.push(0.0);
        b.values.push(a.value);
        b.dones.push(false);
    }
    b.bootstrap.push(0.0);
    let adv = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ret = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    (b, adv, ret)
}

#[test]
fn loss_gradient_matches_finite_differences() {
    for trial in 0..3 {
        let mut p = small_policy(20 + trial, 7, 3);
        p.config.entropy_coef = 0.01;
        let (b, adv, ret) = random_buffer(&p, 12, trial);
        let idx: Vec<usize> = (0..12).collect();
        let (_, grad) = loss_and_grad(&p, &b, &adv, &ret, &idx);
        let base = p.flat_params();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut q = p.clone();
            let mut x = base.clone();
            x[i] += h;
            q.set_flat_params(&x);
            let up = loss_and_grad(&q, &b, &adv, &ret, &idx).0.total;
            x[i] -= 2.0 * h;
            q.set_flat_params(&x);
            let down = loss_and_grad(&q, &b, &adv, &ret, &idx).0.total;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-3 * grad[i].abs() + 1e-8, "trial {trial} param {i}: fd {fd} analytic {}", grad[i]);
        }
    }
}

#[test]
fn zero_advantages_leave_actor_gradient_zero() {
    let p = small_policy(4, 7, 3);
    let (b, adv, ret) = random_buffer(&p, 10, 1);
    let zeros = vec![0.0; adv.len()];
    let idx: Vec<usize> = (0..10).collect();
    let (_, grad) = loss_and_grad(&p, &b, &zeros, &ret, &idx);
    let norm = grad[..p.actor_param_len()].iter().map(|g| g * g).sum::<f64>().sqrt();
    assert!(norm <= 1e-8, "{norm}");
}

#[test]
fn one_update_lowers_loss_on_its_buffer() {
    let mut p = small_policy(6, 7, 3);
    p.config.epochs = 1;
    p.config.minibatch_size = 64;
    let (mut b, adv, ret) = random_buffer(&p, 64, 2);
    b.advantages = Some(adv.clone());
    b.returns = Some(ret.clone());
    let idx: Vec<usize> = (0..64).collect();
    let mean = adv.iter().sum::<f64>() / 64.0;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 64.0).sqrt();
    let norm_adv: Vec<f64> = adv.iter().map(|a| (a - mean) / (std + 1e-8)).collect();
    let before = loss_and_grad(&p, &b, &norm_adv, &ret, &idx).0.total;
    let mut optim = Optimizer::new(&p);
    ppo_update(&mut p, &mut optim, &b, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let after = loss_and_grad(&p, &b, &norm_adv, &ret, &idx).0.total;
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn update_requires_advantages() {
    let mut p = small_policy(6, 7, 3);
    let (b, _, _) = random_buffer(&p, 8, 2);
    let mut optim = Optimizer::new(&p);
    assert!(matches!(
        ppo_update(&mut p, &mut optim, &b, &mut ChaCha8Rng::seed_from_u64(0)),
        Err(PolicyError::MissingAdvantages)
    ));
}

fn task_policy(task: &Task, cfg: &PolicyConfig, seed: u64) -> Policy {
    let t = cfg.ablations.apply(task);
    Policy::new(cfg, t.observation_len(), cfg.residual_scales(&t.chain), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn rollouts_have_batch_shape_and_are_deterministic() {
    let task = toy_task(1, 0.005);
    let cfg = small_config();
    let p = task_policy(&task, &cfg, 0);
    let run = |len: usize| {
        let mut workers: Vec<_> = (0..3).map(|i| RolloutWorker::new(&task, 7, i).unwrap()).collect();
        collect_rollouts(&p, &mut workers, &task, len).unwrap()
    };
    let one = run(1);
    assert_eq!(one.buffer.len(), 3);
    one.buffer.check().unwrap();
    let (a, b) = (run(70), run(70));
    assert_eq!(a.buffer, b.buffer);
    assert!(a.finished.len() >= 3);
}

#[test]
fn negligible_residual_reproduces_replay_reward() {
    let task = toy_task(1, 0.0);
    let cfg = small_config();
    let mut p = task_policy(&task, &cfg, 0);
    p.actor.params.iter_mut().for_each(|v| *v = 0.0);
    p.log_std.iter_mut().for_each(|v| *v = -40.0);
    let mut workers = vec![RolloutWorker::new(&task, 3, 0).unwrap()];
    let r = collect_rollouts(&p, &mut workers, &task, 200).unwrap();
    assert!(!r.finished.is_empty());

    // the first episode is drawn before any action sampling, so it can be
    // rebuilt and replayed with primitives only
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    rng.set_stream(1);
    {
        let f = &r.finished[0];
        let ep = task.sample_episode(&mut rng).unwrap();
        let (mut env, _) = GraspEnv::reset(&ep.spec, &ep.demo, &ep.joints, ep.noise_seed).unwrap();
        let mut total = 0.0;
        while !env.state().terminated {
            let a = env.primitive_action();
            total += env.step(&a).unwrap().reward;
        }
        assert!((total - f.episode_return).abs() < 1e-9, "{total} vs {}", f.episode_return);
    }
}

#[test]
fn contact_ablation_hides_contacts() {
    let task = toy_task(1, 0.0);
    let cfg = PolicyConfig {
        ablations: Ablations {
            use_contacts: false,
            horizon_phi: 1,
            ..Ablations::default()
        },
        ..small_config()
    };
    let t = cfg.ablations.apply(&task);
    assert_eq!(t.observation_len(), 13 + 7 + 9 + 15 + 5 + 18);
    let ep = t.episode(0, None, crate::retarget::RetargetMethod::Position, 0).unwrap();
    let (mut env, _) = GraspEnv::reset(&ep.spec, &ep.demo, &ep.joints, 0).unwrap();
    let slot = 13 + 7 + 9 + 15;
    let mut saw_contact = false;
    while !env.state().terminated {
        let a = env.primitive_action();
        let obs = env.step(&a).unwrap().observation;
        saw_contact |= env.state().contacts.iter().any(|&c| c);
        assert!(obs[slot..slot + 5].iter().all(|&v| v == 0.0));
    }
    assert!(saw_contact);
}

#[test]
fn zero_iterations_return_initial_policy() {
    let task = toy_task(1, 0.005);
    let cfg = PolicyConfig {
        total_steps: 0,
        ..small_config()
    };
    let out = train(&cfg, &task, None, 5).unwrap();
    assert_eq!(out.policy, out.initial);
    assert_eq!(out.curve.len(), 1);
    assert_eq!(out.steps, 0);
}

#[test]
fn training_is_deterministic() {
    let task = toy_task(1, 0.005);
    let cfg = small_config();
    let a = train(&cfg, &task, None, 8).unwrap();
    let b = train(&cfg, &task, None, 8).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.policy, b.policy);
    assert_ne!(a.policy, a.initial);
    assert_eq!(a.steps, 32);
    assert_eq!(a.curve.len(), 3);
}

#[test]
fn checkpoint_round_trip() {
    let p = small_policy(12, 7, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    save_checkpoint(&path, &p, 42).unwrap();
    let (q, step) = load_checkpoint(&path).unwrap();
    assert_eq!(q, p);
    assert_eq!(step, 42);
    std::fs::write(&path, "{\"version\": 9}").unwrap();
    assert!(load_checkpoint(&path).is_err());
}
