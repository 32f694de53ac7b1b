//! Single-task training of the update rule with REINFORCE.
//!
//! An episode starts from the task's initial controller and applies `H + 1`
//! policy-sampled updates. Step `k` rolls out `m_k`, scores it with the
//! negative mean stage cost, encodes `(m_k, D_k)` and samples `Δm_k`.
//!
//! Random streams inside an episode keyed by `key`:
//! rollouts of `m_k` use `key.named("rollout").child(k)`, the update draw
//! uses `key.named("policy").child(k)`.

use crate::controller::{ControllerParams, ControllerUpdate};
use crate::error::{Error, Result};
use crate::policy::{encode_features, FeatureVector, PolicyGradient, PolicyParams};
use crate::stream::StreamKey;
use crate::world::{RolloutBatch, TrackingTask};

/// Anything the update rule can be trained on.
pub trait ControlTask: Sync {
    /// Controller `m_0` every episode starts from.
    fn initial_controller(&self) -> ControllerParams;

    /// Executes `m` and returns the collected rollout data `D`.
    fn rollout(&self, m: &ControllerParams, key: StreamKey) -> Result<RolloutBatch>;
}

impl ControlTask for TrackingTask {
    fn initial_controller(&self) -> ControllerParams {
        TrackingTask::initial_controller(self)
    }

    fn rollout(&self, m: &ControllerParams, key: StreamKey) -> Result<RolloutBatch> {
        TrackingTask::rollout(self, m, self.world.n_rollouts, key)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Policy step size `α`.
    pub alpha: f64,
    /// Discount over optimizer steps.
    pub gamma: f64,
    /// Optimizer steps per episode `H`.
    pub horizon: usize,
    /// Episodes per gradient estimate `K`.
    pub episodes: usize,
    pub iterations: usize,
    /// Reward-to-go with a per-step mean baseline instead of the plain
    /// whole-episode return.
    pub variance_reduction: bool,
    /// Global L2 clip applied before each ascent step.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 3e-3,
            gamma: 1.0,
            horizon: 15,
            episodes: 8,
            iterations: 300,
            variance_reduction: false,
            clip_norm: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha must be finite and >= 0"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma must lie in (0, 1]"));
        }
        if self.episodes == 0 {
            return Err(Error::config("episodes per gradient must be at least 1"));
        }
        if self.clip_norm.is_nan() {
            return Err(Error::config("clip_norm must not be NaN"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStep {
    pub controller: ControllerParams,
    pub features: FeatureVector,
    pub update: ControllerUpdate,
    pub action: Vec<f64>,
    pub log_prob: f64,
    /// `∇_θ log π_θ(Δm_k | m_k, D_k)`.
    pub grad: PolicyGradient,
    /// Negative mean stage cost of `D_k`.
    pub reward: f64,
}

/// One optimization episode, `H + 1` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    steps: Vec<EpisodeStep>,
    gamma: f64,
    return_total: f64,
}

impl EpisodeTrace {
    pub fn from_steps(steps: Vec<EpisodeStep>, gamma: f64) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::config("an episode has at least one step"));
        }
        let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
        let return_total = episode_return(&rewards, gamma);
        Ok(EpisodeTrace {
            steps,
            gamma,
            return_total,
        })
    }

    pub fn steps(&self) -> &[EpisodeStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `Σ_h γ^h R_h`.
    pub fn return_total(&self) -> f64 {
        self.return_total
    }
}

/// `Σ_h γ^h · rewards[h]`.
pub fn episode_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// Runs one training episode with stochastic updates.
pub fn run_episode<T: ControlTask + ?Sized>(
    task: &T,
    policy: &PolicyParams,
    cfg: &TrainConfig,
    key: StreamKey,
) -> Result<EpisodeTrace> {
    let rollout_key = key.named("rollout");
    let policy_key = key.named("policy");
    let mut m = task.initial_controller();
    let mut steps = Vec::with_capacity(cfg.horizon + 1);
    for k in 0..=cfg.horizon {
        let batch = task.rollout(&m, rollout_key.child(k as u64))?;
        let reward = -batch.mean_cost();
        let features = encode_features(&m, &batch, k, cfg.horizon);
        let mut rng = policy_key.child(k as u64).rng();
        let sampled = policy.sample_update(&features, m.steps(), m.m_dim(), &mut rng)?;
        let grad = policy.grad_log_prob(&features, &sampled.action)?;
        let next = m.apply_update(&sampled.update)?;
        steps.push(EpisodeStep {
            controller: m,
            features,
            update: sampled.update,
            action: sampled.action,
            log_prob: sampled.log_prob,
            grad,
            reward,
        });
        m = next;
    }
    EpisodeTrace::from_steps(steps, cfg.gamma)
}

/// Score-function estimate of `∇J(θ)` averaged over `traces`.
///
/// Plain mode multiplies each episode's summed score by its whole return.
/// With `variance_reduction`, the score of `Δm_k` is weighted by the
/// discounted rewards it influences (`R_{k+1..H}`), minus the mean of that
/// quantity across traces.
pub fn policy_gradient(traces: &[EpisodeTrace], cfg: &TrainConfig) -> Result<PolicyGradient> {
    let first = traces
        .first()
        .ok_or_else(|| Error::config("policy gradient needs at least one trace"))?;
    let mut total = PolicyGradient {
        layers: first.steps[0]
            .grad
            .layers
            .iter()
            .map(|l| crate::policy::Dense::zeros(l.n_in, l.n_out))
            .collect(),
        action_log_std: vec![0.0; first.steps[0].grad.action_log_std.len()],
    };
    let n = traces.len() as f64;
    if !cfg.variance_reduction {
        for trace in traces {
            let r = trace.return_total;
            for step in &trace.steps {
                total.add_scaled(&step.grad, r / n);
            }
        }
    } else {
        let len = first.len();
        if traces.iter().any(|t| t.len() != len) {
            return Err(Error::config("variance reduction needs traces of equal length"));
        }
        let to_go: Vec<Vec<f64>> = traces.iter().map(|t| future_rewards(&t.rewards(), cfg.gamma)).collect();
        let baseline: Vec<f64> = (0..len)
            .map(|k| to_go.iter().map(|g| g[k]).sum::<f64>() / n)
            .collect();
        for (trace, g) in traces.iter().zip(&to_go) {
            for (k, step) in trace.steps.iter().enumerate() {
                let adv = g[k] - baseline[k];
                if adv != 0.0 {
                    total.add_scaled(&step.grad, adv / n);
                }
            }
        }
    }
    Ok(total)
}

/// `Σ_{h>k} γ^{h-k-1} r_h` for every `k`.
fn future_rewards(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for k in (0..rewards.len()).rev() {
        out[k] = acc;
        acc = rewards[k] + gamma * acc;
    }
    out
}

/// `θ + α · clip(g)`; rejects non-finite gradients.
pub fn sgd_ascent(policy: &PolicyParams, grad: &PolicyGradient, alpha: f64, clip_norm: f64) -> Result<PolicyParams> {
    if !grad.is_finite() {
        return Err(Error::numeric("policy gradient has non-finite entries; step rejected"));
    }
    let mut g = grad.clone();
    g.clip_norm(clip_norm);
    policy.ascend(&g, alpha)
}

/// Gradient estimate from `K` fresh episodes plus what produced it.
#[derive(Clone, Debug)]
pub struct GradientEstimate {
    pub grad: PolicyGradient,
    pub mean_return: f64,
    pub return_std: f64,
    pub traces: Vec<EpisodeTrace>,
}

/// Runs `cfg.episodes` episodes, episode `j` keyed by `key.child(j)`, and
/// averages their score-function gradients.
pub fn estimate_gradient<T: ControlTask + ?Sized>(
    task: &T,
    policy: &PolicyParams,
    cfg: &TrainConfig,
    key: StreamKey,
) -> Result<GradientEstimate> {
    let traces = collect_episodes(task, policy, cfg, key)?;
    let grad = policy_gradient(&traces, cfg)?;
    let (mean_return, return_std) = mean_std(traces.iter().map(|t| t.return_total));
    Ok(GradientEstimate {
        grad,
        mean_return,
        return_std,
        traces,
    })
}

pub(crate) fn collect_episodes<T: ControlTask + ?Sized>(
    task: &T,
    policy: &PolicyParams,
    cfg: &TrainConfig,
    key: StreamKey,
) -> Result<Vec<EpisodeTrace>> {
    crate::map_indexed(cfg.episodes, |j| run_episode(task, policy, cfg, key.child(j as u64)))
        .into_iter()
        .collect()
}

pub(crate) fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean_return: f64,
    pub return_std: f64,
}

/// `iterations` rounds of (K episodes → gradient → clipped ascent).
///
/// Iteration `i` draws its episodes from `key.child(i)`. The curve records the
/// mean return of each iteration's episodes, measured before its update.
pub fn train_rl<T: ControlTask + ?Sized>(
    task: &T,
    init: PolicyParams,
    cfg: &TrainConfig,
    key: StreamKey,
) -> Result<(PolicyParams, Vec<CurvePoint>)> {
    cfg.validate()?;
    let mut policy = init;
    let mut curve = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let est = estimate_gradient(task, &policy, cfg, key.child(it as u64))?;
        curve.push(CurvePoint {
            iteration: it,
            mean_return: est.mean_return,
            return_std: est.return_std,
        });
        policy = sgd_ascent(&policy, &est.grad, cfg.alpha, cfg.clip_norm)?;
    }
    Ok((policy, curve))
}
