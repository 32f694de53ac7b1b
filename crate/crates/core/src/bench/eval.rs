//! Evaluation of optimizers on path-following tasks.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::bench::config::RunConfig;
use crate::controller::{ControllerParams, ControllerUpdate};
use crate::error::Result;
use crate::meta::{adapt, MetaConfig};
use crate::policy::{encode_features, PolicyParams};
use crate::stream::StreamKey;
use crate::trainer::episode_return;
use crate::world::{Point, State, TrackingTask};

/// How `Δm_k` is produced during an evaluation episode.
#[derive(Clone, Copy, Debug)]
pub enum UpdateRule<'a> {
    /// Learned optimizer; `stochastic` samples `Δm`, otherwise the mean is used.
    Policy { policy: &'a PolicyParams, stochastic: bool },
    /// `Δm ~ N(0, std^2)` on every entry.
    Random { std: f64 },
    /// Classic MPPI with `samples` rollouts per iteration.
    Mppi { temperature: f64, samples: usize },
}

/// The controllers visited by one optimizer episode and their rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationRun {
    /// `m_0 ..= m_H`.
    pub controllers: Vec<ControllerParams>,
    /// `-mean cost(D_k)` for `k = 0..=H`.
    pub rewards: Vec<f64>,
}

impl OptimizationRun {
    pub fn final_controller(&self) -> &ControllerParams {
        self.controllers.last().expect("at least one controller")
    }
}

/// Runs `horizon + 1` optimizer steps from the task's initial controller.
///
/// Uses the same stream layout as training episodes, so a stochastic policy
/// run reproduces the corresponding training episode's draws.
pub fn run_optimizer(
    task: &TrackingTask,
    rule: UpdateRule<'_>,
    horizon: usize,
    n_rollouts: usize,
    key: StreamKey,
) -> Result<OptimizationRun> {
    let rollout_key = key.named("rollout");
    let policy_key = key.named("policy");
    let mut m = task.initial_controller();
    let mut controllers = Vec::with_capacity(horizon + 1);
    let mut rewards = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        let samples = match rule {
            UpdateRule::Mppi { samples, .. } => samples,
            _ => n_rollouts,
        };
        let batch = task.rollout(&m, samples, rollout_key.child(k as u64))?;
        rewards.push(-batch.mean_cost());
        let next = if k == horizon {
            None
        } else {
            let mut rng = policy_key.child(k as u64).rng();
            Some(match rule {
                UpdateRule::Policy { policy, stochastic } => {
                    let phi = encode_features(&m, &batch, k, horizon);
                    let update = if stochastic {
                        policy.sample_update(&phi, m.steps(), m.m_dim(), &mut rng)?.update
                    } else {
                        ControllerUpdate::from_action(m.steps(), m.m_dim(), &policy.policy_mean(&phi)?)?
                    };
                    m.apply_update(&update)?
                }
                UpdateRule::Random { std } => {
                    let n = m.len();
                    let mut draw = || -> Vec<f64> {
                        (0..n)
                            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                            .collect()
                    };
                    let d_mean = draw();
                    let d_log_std = draw();
                    m.apply_update(&ControllerUpdate::new(m.steps(), m.m_dim(), d_mean, d_log_std)?)?
                }
                UpdateRule::Mppi { temperature, .. } => m.baseline_mppi_update(&batch, temperature)?,
            })
        };
        controllers.push(m.clone());
        if let Some(n) = next {
            m = n;
        }
    }
    Ok(OptimizationRun { controllers, rewards })
}

/// Execution of a controller's mean sequence, without control noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Tracking {
    /// `x_0 ..= x_{T+1}`.
    pub states: Vec<State>,
    /// Reference at steps `1 ..= T+1`, aligned with `errors`.
    pub reference: Vec<Point>,
    /// `‖p(x_{t+1}) − ref(t+1)‖` for `t = 0..=T`.
    pub errors: Vec<f64>,
}

/// Executes `m`'s mean controls with the task's process noise drawn from `key`.
pub fn track(task: &TrackingTask, m: &ControllerParams, key: StreamKey) -> Result<Tracking> {
    let (states, _) = task.simulate(m.mean(), &mut key.rng())?;
    let mut reference = Vec::with_capacity(states.len() - 1);
    let mut errors = Vec::with_capacity(states.len() - 1);
    for (t, x) in states.iter().enumerate().skip(1) {
        let r = task.reference_point(t);
        errors.push(((x[0] - r[0]).powi(2) + (x[1] - r[1]).powi(2)).sqrt());
        reference.push(r);
    }
    Ok(Tracking {
        states,
        reference,
        errors,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub tracking: Tracking,
    pub mean_error: f64,
    pub max_error: f64,
    /// Discounted return of the evaluation episode.
    pub episode_return: f64,
    /// Mean rollout cost of each controller `m_0 ..= m_H`.
    pub controller_costs: Vec<f64>,
}

impl EvalReport {
    pub fn new(tracking: Tracking, run: &OptimizationRun, gamma: f64) -> Self {
        let n = tracking.errors.len() as f64;
        let mean_error = tracking.errors.iter().sum::<f64>() / n;
        let max_error = tracking.errors.iter().copied().fold(0.0, f64::max);
        EvalReport {
            tracking,
            mean_error,
            max_error,
            episode_return: episode_return(&run.rewards, gamma),
            controller_costs: run.rewards.iter().map(|r| -r).collect(),
        }
    }
}

/// Streams used by one evaluation keyed by `key`.
fn episode_stream(key: StreamKey) -> StreamKey {
    key.named("episode")
}

fn track_stream(key: StreamKey) -> StreamKey {
    key.named("track")
}

/// Runs `rule` for one episode on `task` and tracks its final controller.
pub fn evaluate_rule(task: &TrackingTask, rule: UpdateRule<'_>, cfg: &RunConfig, key: StreamKey) -> Result<EvalReport> {
    let run = run_optimizer(task, rule, cfg.train.horizon, cfg.world.n_rollouts, episode_stream(key))?;
    let tracking = track(task, run.final_controller(), track_stream(key))?;
    Ok(EvalReport::new(tracking, &run, cfg.train.gamma))
}

/// Adapts `policy` to `task` for `adapt_steps` inner steps (none when 0),
/// then evaluates one episode with the resulting optimizer.
///
/// The evaluation episode and tracking streams do not depend on
/// `adapt_steps`, so adapted and unadapted runs see the same noise.
pub fn evaluate(
    policy: &PolicyParams,
    task: &TrackingTask,
    adapt_steps: usize,
    cfg: &RunConfig,
    key: StreamKey,
) -> Result<EvalReport> {
    let adapted;
    let theta = if adapt_steps > 0 {
        let meta = MetaConfig {
            inner_steps: adapt_steps,
            ..cfg.meta.clone()
        };
        adapted = adapt(policy, task, &meta, key.named("adapt"))?.policy;
        &adapted
    } else {
        policy
    };
    evaluate_rule(
        task,
        UpdateRule::Policy {
            policy: theta,
            stochastic: cfg.eval.stochastic,
        },
        cfg,
        key,
    )
}

/// Rule for a non-learned method.
pub fn baseline_rule(cfg: &RunConfig) -> UpdateRule<'static> {
    UpdateRule::Mppi {
        temperature: cfg.baseline.temperature,
        samples: cfg.baseline.samples,
    }
}

pub fn random_rule(cfg: &RunConfig) -> UpdateRule<'static> {
    UpdateRule::Random {
        std: cfg.policy.init_log_std.exp(),
    }
}
