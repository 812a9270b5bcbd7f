use std::path::{Path, PathBuf};

use handoff_core::env::EnvConfig;
use handoff_core::kinematics::{ChainDocument, KinematicChain};
use handoff_core::policy::PolicyConfig;
use handoff_core::retarget::{Correspondence, RetargetConfig};
use handoff_core::reward::RewardParams;
use handoff_core::task::{claw_chain, claw_correspondence, AugmentRange, Region, SuiteConfig};
use handoff_core::trajectory::human_hand_chain;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Full description of an experiment. Every field except `seed` has a
/// default; the resolved form is echoed next to each run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every random stream in the run. Required here or via `--seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub robot: RobotSpec,
    #[serde(default)]
    pub demos: DemoSource,
    #[serde(default)]
    pub retarget: RetargetConfig,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub reward: RewardParams,
    #[serde(default)]
    pub policy: PolicyConfig,
    /// Per-episode workspace re-placement during training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentRange>,
    #[serde(default)]
    pub eval: EvalSpec,
}

/// Either a built-in robot or a chain document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    /// `claw` or `hand` (the human hand model scaled by `retarget.alpha`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    /// Chain document; needs an explicit `retarget.correspondence`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<PathBuf>,
}

impl Default for RobotSpec {
    fn default() -> Self {
        RobotSpec {
            builtin: Some("claw".into()),
            chain: None,
        }
    }
}

pub const BUILTIN_ROBOTS: [&str; 2] = ["claw", "hand"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoFile {
    pub demo: PathBuf,
    pub object: PathBuf,
}

/// Demonstrations from files, or a synthetic suite placed in `region`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoSource {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<DemoFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteConfig>,
    #[serde(default = "default_region")]
    pub region: Region,
}

pub fn default_region() -> Region {
    Region {
        x: [0.4, 0.5],
        y: [-0.05, 0.05],
    }
}

impl Default for DemoSource {
    fn default() -> Self {
        DemoSource {
            files: Vec::new(),
            suite: Some(SuiteConfig::default()),
            region: default_region(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    /// Passes over the demo set; each pass draws fresh detection noise.
    pub rounds: usize,
    /// Passes used for the periodic evaluation in the training curve;
    /// 0 reports training-episode statistics instead.
    pub curve_rounds: usize,
    /// Region for held-out evaluation: the suite is re-synthesized there.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heldout_region: Option<Region>,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            rounds: 4,
            curve_rounds: 1,
            heldout_region: None,
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::new("config", e.to_string()))
    }

    /// Reads a config; relative paths inside are taken from the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        if let Some(c) = &mut self.robot.chain {
            *c = resolve(base, c);
        }
        for f in &mut self.demos.files {
            f.demo = resolve(base, &f.demo);
            f.object = resolve(base, &f.object);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::new("config", "seed is required (set `seed` or pass --seed)"))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::new("config", m));
        self.seed()?;
        match (&self.robot.builtin, &self.robot.chain) {
            (Some(b), None) if BUILTIN_ROBOTS.contains(&b.as_str()) => {}
            (Some(b), None) => {
                return bad(format!("unknown builtin robot `{b}` (valid: {})", BUILTIN_ROBOTS.join(", ")));
            }
            (None, Some(p)) => {
                if !p.is_file() {
                    return bad(format!("robot.chain: {} does not exist", p.display()));
                }
                if self.retarget.correspondence.is_empty() {
                    return bad("robot.chain needs retarget.correspondence".into());
                }
            }
            _ => return bad("robot needs exactly one of `builtin` and `chain`".into()),
        }
        match (self.demos.files.is_empty(), &self.demos.suite) {
            (false, None) => {
                for (i, f) in self.demos.files.iter().enumerate() {
                    for p in [&f.demo, &f.object] {
                        if !p.is_file() {
                            return bad(format!("demos.files[{i}]: {} does not exist", p.display()));
                        }
                    }
                }
            }
            (true, Some(_)) => {}
            _ => return bad("demos needs exactly one of `files` and `suite`".into()),
        }
        if self.eval.rounds == 0 {
            return bad("eval.rounds must be at least 1".into());
        }
        if self.eval.heldout_region.is_some() && self.demos.suite.is_none() {
            return bad("eval.heldout_region needs a synthetic suite".into());
        }
        Ok(())
    }

    /// The robot and the retargeting config with its correspondence
    /// filled in for built-in robots.
    pub fn robot(&self) -> Result<(KinematicChain, RetargetConfig), CliError> {
        let mut retarget = self.retarget.clone();
        let chain = match (&self.robot.builtin, &self.robot.chain) {
            (Some(b), None) if b == "claw" => claw_chain(retarget.alpha),
            (Some(b), None) if b == "hand" => human_hand_chain().scaled(retarget.alpha, "hand"),
            (None, Some(p)) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| CliError::new("robot", format!("{}: {e}", p.display())))?;
                let doc = ChainDocument::parse(&text).map_err(|e| CliError::new("robot", format!("{}: {e}", p.display())))?;
                doc.build().map_err(|e| CliError::new("robot", format!("{}: {e}", p.display())))?
            }
            _ => return Err(CliError::new("robot", "robot needs exactly one of `builtin` and `chain`")),
        };
        if retarget.correspondence.is_empty() {
            retarget.correspondence = match self.robot.builtin.as_deref() {
                Some("claw") => claw_correspondence(&chain),
                _ => Correspondence::identity(&chain),
            };
        }
        retarget.validate().map_err(|e| CliError::new("retarget", e.to_string()))?;
        Ok((chain, retarget))
    }
}
