//! Browser bindings for the metaopt path-following demo.
//!
//! The page keeps one [`Demo`]: it samples a task from the task
//! distribution, runs the classic MPPI optimizer on it, and trains a small
//! learned optimizer in place so both trajectories can be drawn side by side.

use wasm_bindgen::prelude::*;

use metaopt::bench::config::RunConfig;
use metaopt::bench::eval::{run_optimizer, track, UpdateRule};
use metaopt::bench::run::init_policy;
use metaopt::trainer::{train_rl, TrainConfig};
use metaopt::world::{sample_task, TrackingTask};
use metaopt::{PolicyParams, StreamKey};

/// One optimized controller executed on the task.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct Run {
    xs: Vec<f64>,
    ys: Vec<f64>,
    errors: Vec<f64>,
    costs: Vec<f64>,
}

#[wasm_bindgen]
impl Run {
    /// Executed x positions, starting at the initial state.
    #[wasm_bindgen(getter)]
    pub fn xs(&self) -> Vec<f64> {
        self.xs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn ys(&self) -> Vec<f64> {
        self.ys.clone()
    }

    /// Distance to the reference after each control step.
    #[wasm_bindgen(getter)]
    pub fn errors(&self) -> Vec<f64> {
        self.errors.clone()
    }

    /// Mean rollout cost of the controller at every optimizer iteration.
    #[wasm_bindgen(getter)]
    pub fn costs(&self) -> Vec<f64> {
        self.costs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mean_error(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }
}

#[wasm_bindgen]
pub struct Demo {
    cfg: RunConfig,
    task: TrackingTask,
    policy: PolicyParams,
    trained_iterations: usize,
    returns: Vec<f64>,
}

fn js_err(e: metaopt::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

impl Demo {
    fn key(&self) -> StreamKey {
        StreamKey::new(self.cfg.seed)
    }

    fn execute(&self, rule: UpdateRule<'_>, iterations: usize, label: &str) -> Result<Run, metaopt::Error> {
        let key = self.key().named(label);
        let run = run_optimizer(&self.task, rule, iterations, self.cfg.world.n_rollouts, key.named("episode"))?;
        let tr = track(&self.task, run.final_controller(), key.named("track"))?;
        Ok(Run {
            xs: tr.states.iter().map(|s| s[0]).collect(),
            ys: tr.states.iter().map(|s| s[1]).collect(),
            errors: tr.errors,
            costs: run.rewards.iter().map(|r| -r).collect(),
        })
    }
}

#[wasm_bindgen]
impl Demo {
    /// Starts with the task drawn from `seed` and an untrained optimizer.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsValue> {
        let cfg = RunConfig {
            seed: seed as u64,
            ..RunConfig::default()
        };
        let spec = sample_task(&cfg.dist, &cfg.world, &mut StreamKey::new(seed as u64).named("demo-task").rng())
            .map_err(js_err)?;
        let task = TrackingTask::new(cfg.world.clone(), spec).map_err(js_err)?;
        let policy = init_policy(&cfg).map_err(js_err)?;
        Ok(Demo {
            cfg,
            task,
            policy,
            trained_iterations: 0,
            returns: Vec::new(),
        })
    }

    /// `circle`, `sine` or `lemniscate`.
    #[wasm_bindgen(getter)]
    pub fn kind(&self) -> String {
        self.task.spec.path.kind().name().to_string()
    }

    /// Reference positions for steps `0..=T`, interleaved as `x0, y0, x1, y1, ...`.
    pub fn reference(&self) -> Vec<f64> {
        (0..=self.cfg.world.horizon + 1)
            .flat_map(|t| self.task.reference_point(t))
            .collect()
    }

    /// Runs the classic MPPI update for `iterations` steps.
    pub fn run_mppi(&self, samples: usize, temperature: f64, iterations: usize) -> Result<Run, JsValue> {
        if samples == 0 || !(temperature > 0.0) {
            return Err(JsValue::from_str("MPPI needs at least one sample and a positive temperature"));
        }
        self.execute(UpdateRule::Mppi { temperature, samples }, iterations, "mppi")
            .map_err(js_err)
    }

    /// Runs the learned optimizer's mean update for one episode.
    pub fn run_learned(&self) -> Result<Run, JsValue> {
        self.execute(
            UpdateRule::Policy {
                policy: &self.policy,
                stochastic: false,
            },
            self.cfg.train.horizon,
            "learned",
        )
        .map_err(js_err)
    }

    /// Continues training the learned optimizer on this task. Returns the
    /// mean episode return of the last iteration.
    pub fn train(&mut self, iterations: usize, reward_to_go: bool) -> Result<f64, JsValue> {
        let cfg = TrainConfig {
            iterations,
            variance_reduction: reward_to_go,
            ..self.cfg.train.clone()
        };
        let key = self.key().named("demo-train").child(self.trained_iterations as u64);
        let (policy, curve) = train_rl(&self.task, self.policy.clone(), &cfg, key).map_err(js_err)?;
        self.policy = policy;
        self.trained_iterations += iterations;
        self.returns.extend(curve.iter().map(|c| c.mean_return));
        Ok(self.returns.last().copied().unwrap_or(f64::NAN))
    }

    /// Mean training return of every iteration so far.
    #[wasm_bindgen(getter)]
    pub fn returns(&self) -> Vec<f64> {
        self.returns.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn trained_iterations(&self) -> usize {
        self.trained_iterations
    }
}
