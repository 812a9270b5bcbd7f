use handoff_core::kinematics::{forward_kinematics, JointConfig, KinematicChain};
use handoff_core::retarget::{retarget_trajectory, RetargetConfig};
use handoff_core::task::{claw_chain, claw_correspondence, synth_suite, Region, SuiteConfig};
use proptest::prelude::*;

const FIXTURE: &str = include_str!("fixtures/arm7_hand16.chain.toml");

fn fixture() -> KinematicChain {
    KinematicChain::parse(FIXTURE).unwrap()
}

fn config_in_limits(chain: &KinematicChain, u: &[f64]) -> JointConfig {
    JointConfig::new(
        chain
            .joints()
            .iter()
            .zip(u)
            .map(|(j, &u)| j.limits.0 + u * (j.limits.1 - j.limits.0))
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn written_document_keeps_keypoints(u in prop::collection::vec(0.0..1.0f64, 23)) {
        let chain = fixture();
        let again = KinematicChain::parse(&chain.to_document()).unwrap();
        let q = config_in_limits(&chain, &u);
        let a = forward_kinematics(&chain, &q).unwrap();
        let b = forward_kinematics(&again, &q).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (id, p) in &a {
            prop_assert!((p - b[id]).norm() < 1e-12, "{}", id);
        }
    }
}

#[test]
fn suite_retargets_within_step_bound() {
    let alpha = 1.6;
    let chain = claw_chain(alpha);
    let cfg = RetargetConfig {
        alpha,
        correspondence: claw_correspondence(&chain),
        ..RetargetConfig::default()
    };
    let suite = SuiteConfig {
        demos_per_shape: 2,
        ..SuiteConfig::default()
    };
    let region = Region { x: [0.4, 0.5], y: [-0.05, 0.05] };
    let demos = synth_suite(&suite, &region, 11).unwrap();
    assert_eq!(demos.len(), 2 * suite.shapes.len());
    for d in &demos {
        let traj = retarget_trajectory(&chain, &cfg, &d.demo, &JointConfig::zeros(chain.dof())).unwrap();
        assert_eq!(traj.len(), d.demo.len());
        traj.check(&chain, cfg.step_limit_d).unwrap();
        assert!(traj.max_residual().is_finite());
    }
}
