//! Run configuration and its `key = value` text format.
//!
//! One setting per line, `#` starts a comment, keys use dotted section
//! prefixes (`meta.beta = 0.003`). Ranges are written as two
//! whitespace-separated numbers (`dist.radius = 1.0 2.0`), lists likewise
//! (`policy.hidden = 64 64`). Unknown keys are rejected. [`DEFAULT_CONFIG`]
//! lists every key with its default value.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::meta::MetaConfig;
use crate::policy::{default_init_log_std, DEFAULT_HIDDEN, DEFAULT_OUTPUT_SCALE};
use crate::trainer::TrainConfig;
use crate::world::{Range, TaskDistConfig, WorldConfig};

/// Which optimizer drives the controller.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Meta-trained update rule, adapted per task.
    Meta,
    /// Update rule trained on a single task.
    Rl,
    /// Classic importance-weighted MPPI update.
    MppiBaseline,
    /// Gaussian random-walk updates at the untrained policy's noise scale.
    RandomUpdate,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Meta, Method::Rl, Method::MppiBaseline, Method::RandomUpdate];

    pub fn name(self) -> &'static str {
        match self {
            Method::Meta => "meta",
            Method::Rl => "rl",
            Method::MppiBaseline => "mppi-baseline",
            Method::RandomUpdate => "random-update",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Method::Meta | Method::Rl)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown method {s:?} (expected meta, rl, mppi-baseline or random-update)")))
    }
}

/// Which task single-task RL training uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RlTaskChoice {
    /// [`crate::world::TaskSpec::default_circle`].
    DefaultCircle,
    /// One task drawn from the task distribution.
    Sampled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    pub output_scale: f64,
    pub init_log_std: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: DEFAULT_HIDDEN.to_vec(),
            output_scale: DEFAULT_OUTPUT_SCALE,
            init_log_std: default_init_log_std(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Inner adaptation steps before evaluating the meta optimizer.
    pub adapt_steps: usize,
    /// Number of held-out tasks.
    pub tasks: usize,
    /// Sample `Δm` from the policy instead of using its mean.
    pub stochastic: bool,
    /// Evaluation seeds for return statistics on a single task.
    pub seeds: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            adapt_steps: 1,
            tasks: 20,
            stochastic: false,
            seeds: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    /// Rollouts per MPPI iteration.
    pub samples: usize,
    pub temperature: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            samples: 8,
            temperature: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub method: Method,
    pub world: WorldConfig,
    pub dist: TaskDistConfig,
    pub policy: PolicyConfig,
    pub train: TrainConfig,
    pub rl_task: RlTaskChoice,
    pub meta: MetaConfig,
    pub eval: EvalConfig,
    pub baseline: BaselineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            method: Method::Meta,
            world: WorldConfig::default(),
            dist: TaskDistConfig::default(),
            policy: PolicyConfig::default(),
            train: TrainConfig::default(),
            rl_task: RlTaskChoice::DefaultCircle,
            meta: MetaConfig::default(),
            eval: EvalConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

/// Every configuration key with its default.
pub const DEFAULT_CONFIG: &str = "\
# run
seed = 0
out = out
method = meta

# world constants
world.dt = 0.1
world.horizon = 30
world.n_rollouts = 8
world.omega_ref = 0.5
world.arc_speed = 1.0
world.v_bounds = -2 2
world.omega_bounds = -2 2

# task distribution (uniform low high)
dist.circle_weight = 0.4
dist.sine_weight = 0.4
dist.lemniscate_weight = 0.2
dist.radius = 1 2
dist.center = -0.5 0.5
dist.circle_phase = -3.141592653589793 3.141592653589793
dist.amplitude = 0.5 1.5
dist.frequency = 0.5 1.5
dist.sine_phase = -3.141592653589793 3.141592653589793
dist.scale = 1.5 2.5
dist.lemniscate_phase = -3.141592653589793 3.141592653589793
dist.noise_std = 0 0.02
cost.w_pos = 1
cost.w_ctrl = 0.01

# learned optimizer
policy.hidden = 64 64
policy.output_scale = 0.1
policy.init_log_std = -2.995732273553991

# single-task training
train.alpha = 0.003
train.gamma = 1
train.horizon = 15
train.episodes = 8
train.iterations = 300
train.variance_reduction = false
train.clip_norm = 10
train.task = default

# meta training (episode horizon, discount and clip come from train.*)
meta.beta = 0.003
meta.eta = 0.001
meta.inner_steps = 1
meta.task_batch = 4
meta.episodes = 8
meta.iterations = 200
meta.inner_clip = 10
meta.variance_reduction = false

# evaluation
eval.adapt_steps = 1
eval.tasks = 20
eval.stochastic = false
eval.seeds = 20

# classic MPPI baseline
baseline.samples = 8
baseline.temperature = 1
";

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses config text on top of the defaults. `origin` names the source
    /// in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Format {
                path: origin.to_path_buf(),
                line: idx + 1,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|message| Error::Format {
                path: origin.to_path_buf(),
                line: idx + 1,
                message,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "seed" => self.seed = num(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "method" => self.method = value.parse().map_err(|e: Error| e.to_string())?,

            "world.dt" => self.world.dt = num(key, value)?,
            "world.horizon" => self.world.horizon = num(key, value)?,
            "world.n_rollouts" => self.world.n_rollouts = num(key, value)?,
            "world.omega_ref" => self.world.omega_ref = num(key, value)?,
            "world.arc_speed" => self.world.arc_speed = num(key, value)?,
            "world.v_bounds" => {
                let [lo, hi] = pair(key, value)?;
                self.dist.bounds.lower[0] = lo;
                self.dist.bounds.upper[0] = hi;
            }
            "world.omega_bounds" => {
                let [lo, hi] = pair(key, value)?;
                self.dist.bounds.lower[1] = lo;
                self.dist.bounds.upper[1] = hi;
            }

            "dist.circle_weight" => self.dist.kind_weights[0] = num(key, value)?,
            "dist.sine_weight" => self.dist.kind_weights[1] = num(key, value)?,
            "dist.lemniscate_weight" => self.dist.kind_weights[2] = num(key, value)?,
            "dist.radius" => self.dist.circle_radius = range(key, value)?,
            "dist.center" => self.dist.circle_center = range(key, value)?,
            "dist.circle_phase" => self.dist.circle_phase = range(key, value)?,
            "dist.amplitude" => self.dist.sine_amplitude = range(key, value)?,
            "dist.frequency" => self.dist.sine_frequency = range(key, value)?,
            "dist.sine_phase" => self.dist.sine_phase = range(key, value)?,
            "dist.scale" => self.dist.lemniscate_scale = range(key, value)?,
            "dist.lemniscate_phase" => self.dist.lemniscate_phase = range(key, value)?,
            "dist.noise_std" => self.dist.noise_std = range(key, value)?,
            "cost.w_pos" => self.dist.cost.w_pos = num(key, value)?,
            "cost.w_ctrl" => self.dist.cost.w_ctrl = num(key, value)?,

            "policy.hidden" => {
                self.policy.hidden = value
                    .split_whitespace()
                    .map(|v| num(key, v))
                    .collect::<std::result::Result<_, _>>()?
            }
            "policy.output_scale" => self.policy.output_scale = num(key, value)?,
            "policy.init_log_std" => self.policy.init_log_std = num(key, value)?,

            "train.alpha" => self.train.alpha = num(key, value)?,
            "train.gamma" => {
                self.train.gamma = num(key, value)?;
                self.meta.episode.gamma = self.train.gamma;
            }
            "train.horizon" => {
                self.train.horizon = num(key, value)?;
                self.meta.episode.horizon = self.train.horizon;
            }
            "train.episodes" => self.train.episodes = num(key, value)?,
            "train.iterations" => self.train.iterations = num(key, value)?,
            "train.variance_reduction" => self.train.variance_reduction = flag(key, value)?,
            "train.clip_norm" => {
                self.train.clip_norm = num(key, value)?;
                self.meta.episode.clip_norm = self.train.clip_norm;
            }
            "train.task" => {
                self.rl_task = match value {
                    "default" => RlTaskChoice::DefaultCircle,
                    "sampled" => RlTaskChoice::Sampled,
                    _ => return Err(format!("{key}: expected `default` or `sampled`, got {value:?}")),
                }
            }

            "meta.beta" => self.meta.beta = num(key, value)?,
            "meta.eta" => self.meta.eta = num(key, value)?,
            "meta.inner_steps" => self.meta.inner_steps = num(key, value)?,
            "meta.task_batch" => self.meta.task_batch = num(key, value)?,
            "meta.episodes" => self.meta.episode.episodes = num(key, value)?,
            "meta.iterations" => self.meta.iterations = num(key, value)?,
            "meta.inner_clip" => self.meta.inner_clip = num(key, value)?,
            "meta.variance_reduction" => self.meta.episode.variance_reduction = flag(key, value)?,

            "eval.adapt_steps" => self.eval.adapt_steps = num(key, value)?,
            "eval.tasks" => self.eval.tasks = num(key, value)?,
            "eval.stochastic" => self.eval.stochastic = flag(key, value)?,
            "eval.seeds" => self.eval.seeds = num(key, value)?,

            "baseline.samples" => self.baseline.samples = num(key, value)?,
            "baseline.temperature" => self.baseline.temperature = num(key, value)?,

            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.dist.validate()?;
        self.train.validate()?;
        self.meta.validate()?;
        if self.policy.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be >= 1"));
        }
        if !(self.baseline.temperature > 0.0) || self.baseline.samples == 0 {
            return Err(Error::config("baseline needs temperature > 0 and samples >= 1"));
        }
        Ok(())
    }

    /// Layer widths of the learned optimizer for this world.
    pub fn policy_sizes(&self) -> Vec<usize> {
        let steps = self.world.horizon + 1;
        let mut sizes = vec![crate::policy::feature_dim(steps, crate::world::CONTROL_DIM)];
        sizes.extend(&self.policy.hidden);
        sizes.push(crate::policy::action_dim(steps, crate::world::CONTROL_DIM));
        sizes
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: cannot parse {value:?}"))
}

fn flag(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(format!("{key}: expected true/false, got {value:?}")),
    }
}

fn pair(key: &str, value: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 2 {
        return Err(format!("{key}: expected two numbers `low high`, got {value:?}"));
    }
    Ok([num(key, parts[0])?, num(key, parts[1])?])
}

fn range(key: &str, value: &str) -> std::result::Result<Range, String> {
    let [low, high] = pair(key, value)?;
    Ok(Range::new(low, high))
}
