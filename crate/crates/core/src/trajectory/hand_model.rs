//! Kinematic model of a human hand used to synthesize demonstrations.
//!
//! The wrist moves with three prismatic joints and a yaw joint; each
//! finger is a three-joint planar flexion chain hanging from a knuckle ring
//! below the wrist. Keypoints follow [`HandLayout::STANDARD_21`].
//!
//! [`HandLayout::STANDARD_21`]: super::HandLayout::STANDARD_21

use crate::kinematics::{Joint, JointKind, Keypoint, KinematicChain};
use crate::transform::{RigidTransform, Vec3};

/// Finger geometry: name, knuckle angle around the ring (radians, 0 = +x),
/// and the three phalanx lengths in meters.
pub struct FingerSpec {
    pub name: &'static str,
    pub ring_angle: f64,
    pub phalanges: [f64; 3],
}

pub const HUMAN_FINGERS: [FingerSpec; 5] = [
    FingerSpec { name: "thumb", ring_angle: std::f64::consts::PI, phalanges: [0.040, 0.030, 0.025] },
    FingerSpec { name: "index", ring_angle: -0.45, phalanges: [0.045, 0.026, 0.020] },
    FingerSpec { name: "middle", ring_angle: -0.15, phalanges: [0.048, 0.029, 0.021] },
    FingerSpec { name: "ring", ring_angle: 0.15, phalanges: [0.046, 0.027, 0.020] },
    FingerSpec { name: "little", ring_angle: 0.45, phalanges: [0.038, 0.022, 0.018] },
];

/// Knuckle ring radius and its depth below the wrist origin.
pub const RING_RADIUS: f64 = 0.035;
pub const RING_DROP: f64 = 0.03;
/// Outward tilt of an extended finger from straight down.
pub const OPEN_SPLAY: f64 = 0.5;
pub const WRIST_DOF: usize = 4;

pub fn human_hand_chain() -> KinematicChain {
    let mut links = vec!["world".to_string(), "x".into(), "y".into(), "z".into(), "palm".into()];
    let prismatic = |name: &str, parent: &str, axis: Vec3| Joint {
        name: name.into(),
        kind: JointKind::Prismatic,
        parent_link: parent.into(),
        child_link: name.trim_end_matches("_slide").into(),
        origin: RigidTransform::identity(),
        axis,
        limits: (-2.0, 2.0),
    };
    let mut joints = vec![
        prismatic("x_slide", "world", Vec3::x()),
        prismatic("y_slide", "x", Vec3::y()),
        prismatic("z_slide", "y", Vec3::z()),
        Joint {
            name: "wrist_yaw".into(),
            kind: JointKind::Revolute,
            parent_link: "z".into(),
            child_link: "palm".into(),
            origin: RigidTransform::identity(),
            axis: Vec3::z(),
            limits: (-std::f64::consts::PI, std::f64::consts::PI),
        },
    ];
    let mut keypoints = vec![Keypoint {
        id: "wrist".into(),
        link: "palm".into(),
        offset: RigidTransform::identity(),
    }];
    for f in &HUMAN_FINGERS {
        let (s, c) = f.ring_angle.sin_cos();
        let knuckle = Vec3::new(RING_RADIUS * c, RING_RADIUS * s, -RING_DROP);
        let base = RigidTransform::from_axis_angle(&Vec3::z(), f.ring_angle)
            .compose(&RigidTransform::from_axis_angle(&Vec3::y(), -OPEN_SPLAY));
        let base = RigidTransform::new(*base.rotation(), knuckle);
        keypoints.push(Keypoint {
            id: format!("{}_mcp", f.name),
            link: "palm".into(),
            offset: RigidTransform::from_translation(knuckle),
        });
        let names = ["mcp", "pip", "dip"];
        let mut parent = "palm".to_string();
        for (k, seg) in names.iter().enumerate() {
            let link = format!("{}_{}", f.name, seg);
            let origin = if k == 0 {
                base
            } else {
                RigidTransform::from_translation(Vec3::new(0.0, 0.0, -f.phalanges[k - 1]))
            };
            joints.push(Joint {
                name: format!("{}_{}_flex", f.name, seg),
                kind: JointKind::Revolute,
                parent_link: parent.clone(),
                child_link: link.clone(),
                origin,
                axis: Vec3::y(),
                limits: (-0.3, 1.8),
            });
            links.push(link.clone());
            parent = link;
        }
        keypoints.push(Keypoint {
            id: format!("{}_pip", f.name),
            link: format!("{}_pip", f.name),
            offset: RigidTransform::identity(),
        });
        keypoints.push(Keypoint {
            id: format!("{}_dip", f.name),
            link: format!("{}_dip", f.name),
            offset: RigidTransform::identity(),
        });
        keypoints.push(Keypoint {
            id: format!("{}_tip", f.name),
            link: format!("{}_dip", f.name),
            offset: RigidTransform::from_translation(Vec3::new(0.0, 0.0, -f.phalanges[2])),
        });
    }
    let tips = HUMAN_FINGERS.iter().map(|f| format!("{}_tip", f.name)).collect();
    KinematicChain::new("human_hand".into(), links, joints, keypoints, tips, Some("wrist".into()))
        .expect("built-in hand model is valid")
}

/// Flexion of the three finger joints for a closure level in `[0, 1]`.
pub fn closure_angles(closure: f64) -> [f64; 3] {
    [1.25 * closure, 1.1 * closure, 0.7 * closure]
}
