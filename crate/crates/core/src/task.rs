//! Toy grasp-and-follow task: a claw robot, a suite of synthetic
//! demonstrations over several object shapes, and episode construction
//! (augmentation, detection noise, retargeting) shared by training and
//! evaluation.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvConfig, EnvError, EnvSpec};
use crate::kinematics::{Joint, JointConfig, JointKind, Keypoint, KinematicChain};
use crate::retarget::{Correspondence, JointTrajectory, RetargetConfig, RetargetError, RetargetMethod};
use crate::reward::RewardParams;
use crate::trajectory::{
    augment, closure_angles, synth_demo, DemoTrajectory, HandLayout, ObjectModel, ObjectShape, SynthSpec,
    TrajectoryError, WorkspaceTransform, HUMAN_FINGERS, OPEN_SPLAY, RING_DROP, RING_RADIUS,
};
use crate::transform::{RigidTransform, Vec3};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid task: {0}")]
    Config(String),
    #[error("demo {index}: {source}")]
    Demo {
        index: usize,
        #[source]
        source: TrajectoryError,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Retarget(#[from] RetargetError),
}

/// Finger closure at which claw finger lengths match the human
/// knuckle-to-tip distance.
const CLAW_REFERENCE_CLOSURE: f64 = 0.6;

fn human_chord(phalanges: &[f64; 3], closure: f64) -> f64 {
    let a = closure_angles(closure);
    let mut theta = 0.0;
    let (mut x, mut z) = (0.0, 0.0);
    for k in 0..3 {
        theta += a[k];
        x += phalanges[k] * theta.sin();
        z += phalanges[k] * theta.cos();
    }
    x.hypot(z)
}

/// Robot with a sliding, yawing palm and five single-joint curling
/// fingers laid out like the human hand scaled by `alpha`. Keypoints:
/// `wrist`, then `{finger}_knuckle` and `{finger}_tip` for each finger.
pub fn claw_chain(alpha: f64) -> KinematicChain {
    let mut links: Vec<String> = ["world", "x", "y", "z", "palm"].iter().map(|s| s.to_string()).collect();
    let slide = |name: &str, parent: &str, child: &str, axis: Vec3| Joint {
        name: name.into(),
        kind: JointKind::Prismatic,
        parent_link: parent.into(),
        child_link: child.into(),
        origin: RigidTransform::identity(),
        axis,
        limits: (-1.5, 1.5),
    };
    let mut joints = vec![
        slide("x_slide", "world", "x", Vec3::x()),
        slide("y_slide", "x", "y", Vec3::y()),
        slide("z_slide", "y", "z", Vec3::z()),
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
        let knuckle = Vec3::new(RING_RADIUS * c, RING_RADIUS * s, -RING_DROP) * alpha;
        let base = RigidTransform::from_axis_angle(&Vec3::z(), f.ring_angle)
            .compose(&RigidTransform::from_axis_angle(&Vec3::y(), -OPEN_SPLAY));
        let link = format!("{}_finger", f.name);
        joints.push(Joint {
            name: format!("{}_curl", f.name),
            kind: JointKind::Revolute,
            parent_link: "palm".into(),
            child_link: link.clone(),
            origin: RigidTransform::new(*base.rotation(), knuckle),
            axis: Vec3::y(),
            limits: (-0.5, 2.2),
        });
        keypoints.push(Keypoint {
            id: format!("{}_knuckle", f.name),
            link: "palm".into(),
            offset: RigidTransform::from_translation(knuckle),
        });
        let length = alpha * human_chord(&f.phalanges, CLAW_REFERENCE_CLOSURE);
        keypoints.push(Keypoint {
            id: format!("{}_tip", f.name),
            link: link.clone(),
            offset: RigidTransform::from_translation(Vec3::new(0.0, 0.0, -length)),
        });
        links.push(link);
    }
    let tips = HUMAN_FINGERS.iter().map(|f| format!("{}_tip", f.name)).collect();
    KinematicChain::new("claw".into(), links, joints, keypoints, tips, Some("wrist".into()))
        .expect("built-in claw model is valid")
}

/// Human wrist, knuckles and fingertips paired with the claw's keypoints.
pub fn claw_correspondence(chain: &KinematicChain) -> Vec<Correspondence> {
    let layout = HandLayout::STANDARD_21;
    let mut pairs: Vec<(usize, String)> = vec![(layout.wrist, "wrist".into())];
    for (m, f) in HUMAN_FINGERS.iter().enumerate() {
        pairs.push((layout.knuckle(m), format!("{}_knuckle", f.name)));
        pairs.push((layout.fingertips[m], format!("{}_tip", f.name)));
    }
    let refs: Vec<(usize, &str)> = pairs.iter().map(|(h, r)| (*h, r.as_str())).collect();
    Correspondence::standard(chain, &refs)
}

/// Rectangle of initial object positions on the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Region {
    fn check(&self, name: &str) -> Result<(), TaskError> {
        if self.x[0] <= self.x[1] && self.y[0] <= self.y[1] && self.x.iter().chain(&self.y).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TaskError::Config(format!("region `{name}` has an empty or non-finite range")))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        let u = |rng: &mut R, r: [f64; 2]| if r[0] < r[1] { rng.random_range(r[0]..r[1]) } else { r[0] };
        [u(rng, self.x), u(rng, self.y)]
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        p.x >= self.x[0] && p.x <= self.x[1] && p.y >= self.y[0] && p.y <= self.y[1]
    }
}

/// Range of workspace re-placements: the initial object position is moved
/// uniformly into `region` (height unchanged) after a yaw from `yaw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentRange {
    pub region: Region,
    pub yaw: [f64; 2],
}

impl AugmentRange {
    pub fn sample<R: Rng>(&self, demo: &DemoTrajectory, rng: &mut R) -> WorkspaceTransform {
        let yaw = if self.yaw[0] < self.yaw[1] { rng.random_range(self.yaw[0]..self.yaw[1]) } else { self.yaw[0] };
        let [x, y] = self.region.sample(rng);
        let start = demo.frames[0].object_position();
        let rotated = RigidTransform::from_axis_angle(&Vec3::z(), yaw).transform_point(&start);
        WorkspaceTransform {
            yaw,
            translation: [x - rotated.x, y - rotated.y, 0.0],
        }
    }
}

/// Generator settings for a demonstration suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub shapes: Vec<ObjectShape>,
    pub demos_per_shape: usize,
    /// Relative size variation: each demo scales its shape by a factor
    /// drawn from `1 ± size_jitter`.
    pub size_jitter: f64,
    pub hand_yaw: [f64; 2],
    /// Surface samples per object model.
    pub surface_points: usize,
    /// Template for every demo; shape, id and position are overwritten.
    pub synth: SynthSpec,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            shapes: vec![
                ObjectShape::Sphere { radius: 0.035 },
                ObjectShape::Box { half_extents: [0.028, 0.028, 0.04] },
                ObjectShape::Cylinder { radius: 0.03, half_height: 0.05 },
            ],
            demos_per_shape: 20,
            size_jitter: 0.15,
            hand_yaw: [-0.3, 0.3],
            surface_points: 1000,
            synth: SynthSpec::default(),
        }
    }
}

/// A demonstration with its object model, both in human scale.
#[derive(Debug, Clone)]
pub struct SuiteDemo {
    pub demo: DemoTrajectory,
    pub object: ObjectModel,
    pub spec: SynthSpec,
}

fn shape_name(shape: &ObjectShape) -> &'static str {
    match shape {
        ObjectShape::Sphere { .. } => "sphere",
        ObjectShape::Box { .. } => "box",
        ObjectShape::Cylinder { .. } => "cylinder",
    }
}

/// `demos_per_shape` demonstrations of every shape with objects placed
/// uniformly in `region`. Deterministic in `seed`.
pub fn synth_suite(cfg: &SuiteConfig, region: &Region, seed: u64) -> Result<Vec<SuiteDemo>, TaskError> {
    region.check("region")?;
    if cfg.shapes.is_empty() || cfg.demos_per_shape == 0 {
        return Err(TaskError::Config("suite needs at least one shape and one demo per shape".into()));
    }
    if !(0.0..0.9).contains(&cfg.size_jitter) {
        return Err(TaskError::Config("size_jitter must lie in [0, 0.9)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for shape in &cfg.shapes {
        for k in 0..cfg.demos_per_shape {
            let index = out.len();
            let size = if cfg.size_jitter > 0.0 {
                1.0 + rng.random_range(-cfg.size_jitter..cfg.size_jitter)
            } else {
                1.0
            };
            let shape = shape.scaled(size);
            let id = format!("{}_{k:03}", shape_name(&shape));
            let yaw = if cfg.hand_yaw[0] < cfg.hand_yaw[1] {
                rng.random_range(cfg.hand_yaw[0]..cfg.hand_yaw[1])
            } else {
                cfg.hand_yaw[0]
            };
            let spec = SynthSpec {
                object_id: id.clone(),
                shape,
                object_position: region.sample(&mut rng),
                hand_yaw: yaw,
                ..cfg.synth.clone()
            };
            let demo = synth_demo(&spec, rng.random()).map_err(|source| TaskError::Demo { index, source })?;
            let object = ObjectModel::new(id, shape.sample_surface(cfg.surface_points), size)
                .map_err(|source| TaskError::Demo { index, source })?;
            out.push(SuiteDemo { demo, object, spec });
        }
    }
    Ok(out)
}

/// One task demonstration with its object in robot scale.
#[derive(Debug, Clone)]
pub struct TaskDemo {
    pub demo: DemoTrajectory,
    pub object: Arc<ObjectModel>,
}

/// Everything needed to build episodes for one robot.
#[derive(Debug, Clone)]
pub struct Task {
    pub chain: Arc<KinematicChain>,
    pub demos: Vec<TaskDemo>,
    pub env: EnvConfig,
    pub reward: RewardParams,
    pub retarget: RetargetConfig,
    /// Warm start of the first retargeted frame.
    pub home: JointConfig,
    /// Per-episode workspace re-placement; `None` keeps demos in place.
    pub augmentation: Option<AugmentRange>,
}

/// A ready-to-run episode.
#[derive(Debug, Clone)]
pub struct Episode {
    pub demo_index: usize,
    pub spec: EnvSpec,
    pub demo: DemoTrajectory,
    pub joints: JointTrajectory,
    pub noise_seed: u64,
}

impl Task {
    /// Builds a task from human-scale demos; objects are scaled by the
    /// retargeting `alpha`.
    pub fn new(
        chain: KinematicChain,
        demos: Vec<(DemoTrajectory, ObjectModel)>,
        env: EnvConfig,
        reward: RewardParams,
        retarget: RetargetConfig,
    ) -> Result<Task, TaskError> {
        env.validate()?;
        reward.validate().map_err(EnvError::from)?;
        retarget.validate()?;
        if demos.is_empty() {
            return Err(TaskError::Config("task has no demonstrations".into()));
        }
        for (index, (d, _)) in demos.iter().enumerate() {
            d.validate().map_err(|source| TaskError::Demo { index, source })?;
            if d.lift_index.is_none() {
                return Err(TaskError::Config(format!("demo {index} has no lift index")));
            }
        }
        let alpha = retarget.alpha;
        let home = JointConfig::zeros(chain.dof());
        Ok(Task {
            chain: Arc::new(chain),
            demos: demos
                .into_iter()
                .map(|(demo, object)| TaskDemo {
                    demo,
                    object: Arc::new(object.scaled(alpha)),
                })
                .collect(),
            env,
            reward,
            retarget,
            home,
            augmentation: None,
        })
    }

    pub fn env_spec(&self, demo_index: usize) -> EnvSpec {
        EnvSpec {
            chain: self.chain.clone(),
            object: self.demos[demo_index].object.clone(),
            cfg: self.env,
            reward: self.reward,
            alpha: self.retarget.alpha,
            step_limit: self.retarget.step_limit_d,
        }
    }

    pub fn observation_len(&self) -> usize {
        self.env.observation_len(self.chain.dof())
    }

    /// Episode for demo `demo_index`, optionally re-placed by `transform`,
    /// seen through detection noise `noise_seed`, with primitives from
    /// `method`.
    pub fn episode(
        &self,
        demo_index: usize,
        transform: Option<&WorkspaceTransform>,
        method: RetargetMethod,
        noise_seed: u64,
    ) -> Result<Episode, TaskError> {
        let base = &self.demos[demo_index].demo;
        let demo = match transform {
            Some(t) => augment(base, t),
            None => base.clone(),
        };
        let spec = self.env_spec(demo_index);
        let joints = spec.retarget_episode(&self.retarget, method, &demo, &self.home, noise_seed)?;
        Ok(Episode {
            demo_index,
            spec,
            demo,
            joints,
            noise_seed,
        })
    }

    /// A uniformly chosen demo, re-placed when augmentation is on, with a
    /// fresh noise seed; position retargeting supplies the primitives.
    pub fn sample_episode<R: Rng>(&self, rng: &mut R) -> Result<Episode, TaskError> {
        let index = rng.random_range(0..self.demos.len());
        let transform = self.augmentation.map(|a| a.sample(&self.demos[index].demo, rng));
        let noise_seed = rng.random();
        self.episode(index, transform.as_ref(), RetargetMethod::Position, noise_seed)
    }
}
