//! Seeded entry points shared by the command-line tool and the tests.
//!
//! Every stream is derived from `StreamKey::new(cfg.seed)`:
//!
//! | purpose                    | stream                         |
//! |----------------------------|--------------------------------|
//! | policy initialization      | `root.named("init")`           |
//! | sampled RL training task   | `root.named("rl-task")`        |
//! | single-task training       | `root.named("train-rl")`       |
//! | meta-training              | `root.named("train-meta")`     |
//! | held-out task `i`          | `root.named("eval").child(i)`  |
//! | fixed-task evaluation seed | `root.named("seeds").child(s)` |

use std::path::PathBuf;

use crate::bench::config::{Method, RlTaskChoice, RunConfig};
use crate::bench::checkpoint::load_checkpoint;
use crate::bench::eval::{baseline_rule, evaluate, evaluate_rule, random_rule, EvalReport, UpdateRule};
use crate::error::{Error, Result};
use crate::meta::{meta_train, MetaCurvePoint};
use crate::policy::PolicyParams;
use crate::stream::StreamKey;
use crate::trainer::{train_rl, CurvePoint};
use crate::world::{sample_task, TaskSpec, TrackingTask};

pub fn root_key(cfg: &RunConfig) -> StreamKey {
    StreamKey::new(cfg.seed)
}

/// The untrained update rule for this configuration.
pub fn init_policy(cfg: &RunConfig) -> Result<PolicyParams> {
    PolicyParams::init(
        &cfg.policy_sizes(),
        cfg.policy.init_log_std,
        cfg.policy.output_scale,
        &mut root_key(cfg).named("init").rng(),
    )
}

/// The task single-task RL trains on.
pub fn rl_task(cfg: &RunConfig) -> Result<TrackingTask> {
    let spec = match cfg.rl_task {
        RlTaskChoice::DefaultCircle => {
            let mut spec = TaskSpec::default_circle(&cfg.world);
            spec.cost = cfg.dist.cost;
            spec.bounds = cfg.dist.bounds;
            spec
        }
        RlTaskChoice::Sampled => sample_task(&cfg.dist, &cfg.world, &mut root_key(cfg).named("rl-task").rng())?,
    };
    TrackingTask::new(cfg.world.clone(), spec)
}

pub fn run_train_rl(cfg: &RunConfig) -> Result<(PolicyParams, Vec<CurvePoint>)> {
    cfg.validate()?;
    train_rl(&rl_task(cfg)?, init_policy(cfg)?, &cfg.train, root_key(cfg).named("train-rl"))
}

pub fn run_train_meta(cfg: &RunConfig) -> Result<(PolicyParams, Vec<MetaCurvePoint>)> {
    cfg.validate()?;
    meta_train(&cfg.dist, &cfg.world, init_policy(cfg)?, &cfg.meta, root_key(cfg).named("train-meta"))
}

/// Stream for held-out task `i`. Training never draws from the `eval` namespace.
pub fn eval_key(cfg: &RunConfig, i: usize) -> StreamKey {
    root_key(cfg).named("eval").child(i as u64)
}

pub fn held_out_task(cfg: &RunConfig, i: usize) -> Result<TrackingTask> {
    let spec = sample_task(&cfg.dist, &cfg.world, &mut eval_key(cfg, i).named("task").rng())?;
    TrackingTask::new(cfg.world.clone(), spec)
}

/// Where `method`'s checkpoint lives under the output directory.
pub fn checkpoint_path(cfg: &RunConfig, method: Method) -> PathBuf {
    cfg.out_dir.join(format!("{}.ckpt", method.name()))
}

/// Loads the checkpoint of a learned method, naming the path if it is missing.
pub fn load_method_policy(cfg: &RunConfig, method: Method) -> Result<PolicyParams> {
    let path = checkpoint_path(cfg, method);
    if !path.exists() {
        return Err(Error::Input(format!(
            "missing checkpoint {} (run train-{} first)",
            path.display(),
            method.name()
        )));
    }
    let policy = load_checkpoint(&path, cfg.policy.output_scale)?;
    if policy.dims() != cfg.policy_sizes() {
        return Err(Error::Input(format!(
            "checkpoint {} has layer widths {:?}, configuration expects {:?}",
            path.display(),
            policy.dims(),
            cfg.policy_sizes()
        )));
    }
    Ok(policy)
}

/// One method as evaluated on a task: learned methods carry their parameters
/// and the number of adaptation steps run before evaluation.
#[derive(Clone, Copy, Debug)]
pub enum Evaluator<'a> {
    Learned { policy: &'a PolicyParams, adapt_steps: usize },
    Rule(UpdateRule<'a>),
}

impl<'a> Evaluator<'a> {
    /// Evaluator for a non-learned method.
    pub fn fixed(method: Method, cfg: &RunConfig) -> Option<Self> {
        match method {
            Method::MppiBaseline => Some(Evaluator::Rule(baseline_rule(cfg))),
            Method::RandomUpdate => Some(Evaluator::Rule(random_rule(cfg))),
            Method::Meta | Method::Rl => None,
        }
    }

    pub fn evaluate(&self, task: &TrackingTask, cfg: &RunConfig, key: StreamKey) -> Result<EvalReport> {
        match *self {
            Evaluator::Learned { policy, adapt_steps } => evaluate(policy, task, adapt_steps, cfg, key),
            Evaluator::Rule(rule) => evaluate_rule(task, rule, cfg, key),
        }
    }
}

/// Evaluates on held-out tasks `0..n`, returning each task with its report.
pub fn evaluate_held_out(cfg: &RunConfig, ev: Evaluator<'_>, n: usize) -> Result<Vec<(TaskSpec, EvalReport)>> {
    crate::map_indexed(n, |i| {
        let task = held_out_task(cfg, i)?;
        let report = ev.evaluate(&task, cfg, eval_key(cfg, i))?;
        Ok((task.spec, report))
    })
    .into_iter()
    .collect()
}

/// Episode returns of `ev` on one task over `cfg.eval.seeds` seeds.
pub fn seed_returns(cfg: &RunConfig, task: &TrackingTask, ev: Evaluator<'_>) -> Result<Vec<f64>> {
    crate::map_indexed(cfg.eval.seeds, |s| {
        Ok(ev.evaluate(task, cfg, root_key(cfg).named("seeds").child(s as u64))?.episode_return)
    })
    .into_iter()
    .collect()
}
