use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use handoff_core::eval::{compare, evaluate, Actor};
use handoff_core::kinematics::JointConfig;
use handoff_core::policy::{load_checkpoint, save_checkpoint, train, CurveRow, EvalPlan, Policy};
use handoff_core::retarget::{joint_trajectory_to_json, RetargetMethod};
use handoff_core::task::{synth_suite, Region, SuiteConfig, Task};
use handoff_core::trajectory::{
    load_object_model, load_trajectory, object_model_to_json, sample_augmentations, synth_demo, trajectory_to_json,
    DemoTrajectory, ObjectModel, SynthSpec, Workspace,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::output::{Manifest, Output};
use crate::{substream, CliError, Command, Globals, DEFAULT_OUT, OUT_ENV};

/// Which demonstrations an evaluation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    /// The training demonstrations.
    Seen,
    /// The suite re-synthesized in `eval.heldout_region`.
    Heldout,
}

const METHODS: [RetargetMethod; 3] = [RetargetMethod::Position, RetargetMethod::Vector, RetargetMethod::Dexpilot];

pub fn parse_method(name: &str) -> Result<RetargetMethod, CliError> {
    METHODS.into_iter().find(|m| m.name() == name).ok_or_else(|| {
        let valid: Vec<&str> = METHODS.iter().map(|m| m.name()).collect();
        CliError::new("retarget", format!("unknown method `{name}` (valid: {})", valid.join(", ")))
    })
}

fn out_dir(g: &Globals, cfg: Option<&ExperimentConfig>) -> PathBuf {
    g.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn load_config(g: &Globals) -> Result<ExperimentConfig, CliError> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| CliError::new("config", "this command needs --config"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if g.seed.is_some() {
        cfg.seed = g.seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_toml<T: serde::de::DeserializeOwned>(stage: &'static str, path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::new(stage, format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::new(stage, format!("{}: {e}", path.display())))
}

pub(crate) fn dispatch(g: &Globals, command: &Command) -> Result<Manifest, CliError> {
    match command {
        Command::Synth { spec, count } => cmd_synth(g, spec, *count),
        Command::Augment { demo, workspace, count } => cmd_augment(g, demo, workspace, *count),
        Command::Retarget { method } => cmd_retarget(g, method),
        Command::Train => cmd_train(g),
        Command::Eval { checkpoint, split } => cmd_eval(g, checkpoint, *split),
        Command::Compare {
            methods,
            checkpoint,
            split,
        } => cmd_compare(g, methods, checkpoint, *split),
    }
}

/// Seed from `--seed`, else from `--config` when one is given.
fn standalone_seed(g: &Globals) -> Result<u64, CliError> {
    if let Some(s) = g.seed {
        return Ok(s);
    }
    match &g.config {
        Some(p) => ExperimentConfig::load(p)?.seed(),
        None => Err(CliError::new("config", "seed is required (pass --seed or --config)")),
    }
}

fn cmd_synth(g: &Globals, spec_path: &Path, count: usize) -> Result<Manifest, CliError> {
    let seed = standalone_seed(g)?;
    let spec: SynthSpec = read_toml("synth", spec_path)?;
    if count == 0 {
        return Err(CliError::new("synth", "count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, "synth"));
    let demos = (0..count)
        .map(|_| synth_demo(&spec, rng.random()).map_err(|e| CliError::new("synth", e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let object = ObjectModel::new(
        spec.object_id.clone(),
        spec.shape.sample_surface(SuiteConfig::default().surface_points),
        1.0,
    )
    .map_err(|e| CliError::new("synth", e.to_string()))?;
    let mut out = Output::create(&out_dir(g, None))?;
    for (i, d) in demos.iter().enumerate() {
        out.write(&format!("demo_{i:03}.json"), trajectory_to_json(d))?;
    }
    out.write("object.json", object_model_to_json(&object))?;
    out.write("spec.toml", toml::to_string(&spec).expect("spec serializes"))?;
    out.finish("synth", Some(seed), json!({ "count": count }))
}

fn cmd_augment(g: &Globals, demo_path: &Path, workspace_path: &Path, count: usize) -> Result<Manifest, CliError> {
    let seed = standalone_seed(g)?;
    let demo = load_trajectory(demo_path).map_err(|e| CliError::new("augment", e.to_string()))?;
    let workspace: Workspace = read_toml("augment", workspace_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, "augment"));
    let samples =
        sample_augmentations(&demo, count, &workspace, &mut rng).map_err(|e| CliError::new("augment", e.to_string()))?;
    let mut out = Output::create(&out_dir(g, None))?;
    let mut transforms = Vec::with_capacity(samples.len());
    for (i, (t, d)) in samples.iter().enumerate() {
        let name = format!("aug_{i:03}.json");
        out.write(&name, trajectory_to_json(d))?;
        transforms.push(json!({ "file": name, "yaw": t.yaw, "translation": t.translation }));
    }
    out.finish("augment", Some(seed), json!({ "source": demo_path.display().to_string(), "transforms": transforms }))
}

/// Human-scale demonstrations with their object models.
pub fn load_demos(cfg: &ExperimentConfig) -> Result<Vec<(DemoTrajectory, ObjectModel)>, CliError> {
    if let Some(suite) = &cfg.demos.suite {
        return suite_demos(suite, &cfg.demos.region, substream(cfg.seed()?, "synth"));
    }
    cfg.demos
        .files
        .iter()
        .map(|f| {
            let d = load_trajectory(&f.demo).map_err(|e| CliError::new("demos", e.to_string()))?;
            let o = load_object_model(&f.object).map_err(|e| CliError::new("demos", e.to_string()))?;
            Ok((d, o))
        })
        .collect()
}

fn suite_demos(suite: &SuiteConfig, region: &Region, seed: u64) -> Result<Vec<(DemoTrajectory, ObjectModel)>, CliError> {
    Ok(synth_suite(suite, region, seed)
        .map_err(|e| CliError::new("synth", e.to_string()))?
        .into_iter()
        .map(|s| (s.demo, s.object))
        .collect())
}

fn task_from(cfg: &ExperimentConfig, demos: Vec<(DemoTrajectory, ObjectModel)>) -> Result<Task, CliError> {
    let (chain, retarget) = cfg.robot()?;
    let mut task =
        Task::new(chain, demos, cfg.env, cfg.reward, retarget).map_err(|e| CliError::new("task", e.to_string()))?;
    task.augmentation = cfg.augment;
    Ok(task)
}

/// The training task described by `cfg`.
pub fn build_task(cfg: &ExperimentConfig) -> Result<Task, CliError> {
    task_from(cfg, load_demos(cfg)?)
}

/// The suite re-synthesized in the held-out region on its own stream.
pub fn heldout_task(cfg: &ExperimentConfig) -> Result<Task, CliError> {
    let (Some(suite), Some(region)) = (&cfg.demos.suite, &cfg.eval.heldout_region) else {
        return Err(CliError::new("eval", "held-out evaluation needs demos.suite and eval.heldout_region"));
    };
    task_from(cfg, suite_demos(suite, region, substream(cfg.seed()?, "synth.heldout"))?)
}

/// Evaluation seeds: `rounds` draws from sub-stream `stream` of the `env`
/// stream. Stream 0 is the final evaluation, stream 1 the training curve.
pub fn eval_seeds(seed: u64, stream: u64, rounds: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, "env"));
    rng.set_stream(stream);
    (0..rounds).map(|_| rng.random()).collect()
}

fn split_task(cfg: &ExperimentConfig, split: Split) -> Result<Task, CliError> {
    match split {
        Split::Seen => build_task(cfg),
        Split::Heldout => heldout_task(cfg),
    }
}

fn cmd_retarget(g: &Globals, method: &str) -> Result<Manifest, CliError> {
    let method = parse_method(method)?;
    let cfg = load_config(g)?;
    let (chain, retarget) = cfg.robot()?;
    let demos = load_demos(&cfg)?;
    let home = JointConfig::zeros(chain.dof());
    let mut out = Output::create(&out_dir(g, Some(&cfg)))?;
    out.write("config.toml", cfg.to_toml())?;
    let mut report = String::from("demo\tobject\tframes\tmean_residual\tmedian_residual\tmax_residual\tconverged\n");
    let mut frames = String::from("demo\tframe\tresidual\tconverged\n");
    for (i, (demo, object)) in demos.iter().enumerate() {
        let jt = method
            .run(&chain, &retarget, demo, &home)
            .map_err(|e| CliError::new("retarget", format!("demo {i}: {e}")))?;
        out.write(&format!("joints_{i:03}.json"), joint_trajectory_to_json(&jt, method.name(), &retarget))?;
        let mut sorted = jt.residuals.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len().max(1) as f64;
        let _ = writeln!(
            report,
            "{i}\t{}\t{}\t{:.3e}\t{:.3e}\t{:.3e}\t{}",
            object.id,
            jt.len(),
            sorted.iter().sum::<f64>() / n,
            sorted.get(sorted.len() / 2).copied().unwrap_or(0.0),
            jt.max_residual(),
            jt.converged.iter().filter(|&&c| c).count()
        );
        for (t, (r, c)) in jt.residuals.iter().zip(&jt.converged).enumerate() {
            let _ = writeln!(frames, "{i}\t{t}\t{r:.6e}\t{c}");
        }
    }
    out.write("report.tsv", report)?;
    out.write("residuals.tsv", frames)?;
    out.finish("retarget", cfg.seed, json!({ "method": method.name() }))
}

fn cmd_train(g: &Globals) -> Result<Manifest, CliError> {
    let cfg = load_config(g)?;
    let seed = cfg.seed()?;
    let task = build_task(&cfg)?;
    let curve_seeds = eval_seeds(seed, 1, cfg.eval.curve_rounds);
    let plan = (!curve_seeds.is_empty()).then(|| EvalPlan {
        task: &task,
        seeds: curve_seeds,
    });
    let mut out = Output::create(&out_dir(g, Some(&cfg)))?;
    out.write("config.toml", cfg.to_toml())?;
    let result =
        train(&cfg.policy, &task, plan.as_ref(), substream(seed, "policy")).map_err(|e| CliError::new("train", e.to_string()))?;
    out.write("curve.tsv", CurveRow::tsv(&result.curve))?;
    let mut save = |name: &str, policy: &Policy, step: usize| -> Result<(), CliError> {
        save_checkpoint(&out.path(name), policy, step).map_err(|e| CliError::new("train", e.to_string()))?;
        out.record(name)
    };
    save("checkpoint_initial.json", &result.initial, 0)?;
    if result.steps > 0 {
        save("checkpoint_final.json", &result.policy, result.steps)?;
        save("checkpoint_best.json", &result.best.1, result.best.0.step)?;
    }
    out.finish(
        "train",
        Some(seed),
        json!({ "steps": result.steps, "iterations": result.updates.len(), "best_step": result.best.0.step }),
    )
}

fn load_policy(path: &Path, task: &Task) -> Result<Policy, CliError> {
    let (policy, _) = load_checkpoint(path).map_err(|e| CliError::new("eval", e.to_string()))?;
    let expected = policy.config.ablations.apply(task).observation_len();
    if policy.obs_dim() != expected || policy.act_dim() != task.chain.dof() {
        return Err(CliError::new(
            "eval",
            format!(
                "{}: checkpoint expects {} observations and {} joints, task has {expected} and {}",
                path.display(),
                policy.obs_dim(),
                policy.act_dim(),
                task.chain.dof()
            ),
        ));
    }
    Ok(policy)
}

fn cmd_eval(g: &Globals, checkpoint: &Path, split: Split) -> Result<Manifest, CliError> {
    let cfg = load_config(g)?;
    let seed = cfg.seed()?;
    let task = split_task(&cfg, split)?;
    let policy = load_policy(checkpoint, &task)?;
    let report = evaluate(&Actor::Residual(&policy), &task, &eval_seeds(seed, 0, cfg.eval.rounds))
        .map_err(|e| CliError::new("eval", e.to_string()))?;
    let mut out = Output::create(&out_dir(g, Some(&cfg)))?;
    out.write("config.toml", cfg.to_toml())?;
    out.write("report.tsv", report.to_tsv())?;
    out.write("report.json", serde_json::to_string_pretty(&report).expect("report serializes"))?;
    out.finish(
        "eval",
        Some(seed),
        json!({ "checkpoint": checkpoint.display().to_string(), "split": split }),
    )
}

fn cmd_compare(g: &Globals, methods: &[String], checkpoints: &[PathBuf], split: Split) -> Result<Manifest, CliError> {
    let methods = methods.iter().map(|m| parse_method(m)).collect::<Result<Vec<_>, _>>()?;
    let cfg = load_config(g)?;
    let seed = cfg.seed()?;
    let task = split_task(&cfg, split)?;
    let policies = checkpoints
        .iter()
        .map(|p| load_policy(p, &task))
        .collect::<Result<Vec<_>, _>>()?;
    let mut actors: Vec<Actor> = methods.iter().map(|&m| Actor::Replay(m)).collect();
    actors.extend(policies.iter().map(Actor::Residual));
    if actors.is_empty() {
        return Err(CliError::new("eval", "nothing to compare"));
    }
    let mut table = compare(&actors, &task, &eval_seeds(seed, 0, cfg.eval.rounds))
        .map_err(|e| CliError::new("eval", e.to_string()))?;
    for (row, path) in table.rows[methods.len()..].iter_mut().zip(checkpoints) {
        row.0 = path.file_stem().map_or_else(|| row.0.clone(), |s| s.to_string_lossy().into_owned());
    }
    let mut out = Output::create(&out_dir(g, Some(&cfg)))?;
    out.write("config.toml", cfg.to_toml())?;
    out.write("comparison.tsv", table.render())?;
    out.write("comparison.json", serde_json::to_string_pretty(&table).expect("comparison serializes"))?;
    out.finish("compare", Some(seed), json!({ "split": split }))
}
