//! Meta-training of the update rule across a task distribution.
//!
//! Each meta-iteration samples a batch of tasks, adapts `θ` to every task
//! with a few score-function gradient-ascent steps, resamples episodes with
//! the adapted parameters and ascends `θ` along the sum of the post-adaptation
//! gradients. The meta-gradient is first-order: the gradient measured at
//! `θ_task` stands in for the gradient through the inner update.
//!
//! Streams for one task keyed by `key`: inner step `s` uses
//! `key.named("inner").child(s)`, post-adaptation episodes use
//! [`post_stream`]`(key)`.

use crate::error::{Error, Result};
use crate::policy::{PolicyGradient, PolicyParams};
use crate::stream::StreamKey;
use crate::trainer::{collect_episodes, estimate_gradient, mean_std, policy_gradient, sgd_ascent, ControlTask, EpisodeTrace, TrainConfig};
use crate::world::{sample_task, TaskDistConfig, TrackingTask, WorldConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct MetaConfig {
    /// Inner (adaptation) step size.
    pub beta: f64,
    /// Outer (meta) step size.
    pub eta: f64,
    pub inner_steps: usize,
    pub task_batch: usize,
    pub iterations: usize,
    /// Global L2 clip on each inner gradient; `<= 0` disables it.
    pub inner_clip: f64,
    /// Episode structure, `K`, discount, estimator mode and the outer clip.
    pub episode: TrainConfig,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            beta: 3e-3,
            eta: 1e-3,
            inner_steps: 1,
            task_batch: 4,
            iterations: 200,
            inner_clip: 10.0,
            episode: TrainConfig::default(),
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        if !(self.beta >= 0.0 && self.beta.is_finite()) || !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::config("meta step sizes must be finite and >= 0"));
        }
        if self.task_batch == 0 {
            return Err(Error::config("task_batch must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AdaptationResult {
    /// Adapted parameters `θ_task`.
    pub policy: PolicyParams,
    /// Mean return of the first inner-step episodes, run with the incoming `θ`.
    pub pre_return: f64,
    /// Mean return of the fresh post-adaptation episodes.
    pub post_return: f64,
    /// Post-adaptation episodes, sampled with `θ_task`.
    pub traces: Vec<EpisodeTrace>,
}

/// Stream for the post-adaptation episodes of a task keyed by `key`.
pub fn post_stream(key: StreamKey) -> StreamKey {
    key.named("post")
}

/// Stream for inner step `s` of a task keyed by `key`.
pub fn inner_stream(key: StreamKey, s: usize) -> StreamKey {
    key.named("inner").child(s as u64)
}

/// Specializes `θ` to `task` with `cfg.inner_steps` gradient-ascent steps of
/// size `β`. The incoming parameters are never modified.
pub fn adapt<T: ControlTask + ?Sized>(
    policy: &PolicyParams,
    task: &T,
    cfg: &MetaConfig,
    key: StreamKey,
) -> Result<AdaptationResult> {
    let mut theta = policy.clone();
    let mut pre_return = None;
    for s in 0..cfg.inner_steps {
        let est = estimate_gradient(task, &theta, &cfg.episode, inner_stream(key, s))?;
        if s == 0 {
            pre_return = Some(est.mean_return);
        }
        if !est.grad.is_finite() {
            return Err(Error::numeric("inner gradient has non-finite entries"));
        }
        let mut g = est.grad;
        g.clip_norm(cfg.inner_clip);
        theta = theta.ascend(&g, cfg.beta)?;
    }
    let traces = collect_episodes(task, &theta, &cfg.episode, post_stream(key))?;
    let (post_return, _) = mean_std(traces.iter().map(|t| t.return_total()));
    Ok(AdaptationResult {
        policy: theta,
        pre_return: pre_return.unwrap_or(post_return),
        post_return,
        traces,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskDiagnostics {
    pub pre_return: f64,
    pub post_return: f64,
}

/// First-order meta-gradient over tasks, each paired with its own stream.
pub fn meta_gradient_keyed<T: ControlTask>(
    policy: &PolicyParams,
    tasks: &[(T, StreamKey)],
    cfg: &MetaConfig,
) -> Result<(PolicyGradient, Vec<TaskDiagnostics>)> {
    if tasks.is_empty() {
        return Err(Error::config("meta gradient needs at least one task"));
    }
    let per_task: Vec<Result<(PolicyGradient, TaskDiagnostics)>> = crate::map_indexed(tasks.len(), |i| {
        let (task, key) = &tasks[i];
        let res = adapt(policy, task, cfg, *key)?;
        let g = policy_gradient(&res.traces, &cfg.episode)?;
        Ok((
            g,
            TaskDiagnostics {
                pre_return: res.pre_return,
                post_return: res.post_return,
            },
        ))
    });
    let mut total = PolicyGradient::zeros_like(policy);
    let mut diags = Vec::with_capacity(tasks.len());
    for r in per_task {
        let (g, d) = r?;
        total.add_scaled(&g, 1.0);
        diags.push(d);
    }
    Ok((total, diags))
}

/// [`meta_gradient_keyed`] with task `i` keyed by `key.child(i)`.
pub fn meta_gradient<T: ControlTask + Clone>(
    policy: &PolicyParams,
    tasks: &[T],
    cfg: &MetaConfig,
    key: StreamKey,
) -> Result<(PolicyGradient, Vec<TaskDiagnostics>)> {
    let keyed: Vec<(T, StreamKey)> = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), key.child(i as u64)))
        .collect();
    meta_gradient_keyed(policy, &keyed, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetaCurvePoint {
    pub iteration: usize,
    pub mean_pre_return: f64,
    pub mean_post_return: f64,
}

/// Meta-training with tasks supplied by `sample(iteration, index)`.
///
/// Iteration `i` keys its meta-gradient by `key.named("meta").child(i)`.
pub fn meta_train_with<T, F>(
    init: PolicyParams,
    cfg: &MetaConfig,
    key: StreamKey,
    mut sample: F,
) -> Result<(PolicyParams, Vec<MetaCurvePoint>)>
where
    T: ControlTask + Clone,
    F: FnMut(usize, usize) -> Result<T>,
{
    cfg.validate()?;
    let mut policy = init;
    let mut curve = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let tasks = (0..cfg.task_batch).map(|i| sample(it, i)).collect::<Result<Vec<T>>>()?;
        let (g, diags) = meta_gradient(&policy, &tasks, cfg, key.named("meta").child(it as u64))?;
        let (pre, _) = mean_std(diags.iter().map(|d| d.pre_return));
        let (post, _) = mean_std(diags.iter().map(|d| d.post_return));
        curve.push(MetaCurvePoint {
            iteration: it,
            mean_pre_return: pre,
            mean_post_return: post,
        });
        policy = sgd_ascent(&policy, &g, cfg.eta, cfg.episode.clip_norm)?;
    }
    Ok((policy, curve))
}

/// Stream used to draw training task `index` of meta-iteration `iteration`.
pub fn training_task_stream(key: StreamKey, iteration: usize, index: usize) -> StreamKey {
    key.named("tasks").child(iteration as u64).child(index as u64)
}

/// Meta-trains on tasks drawn from `dist`.
pub fn meta_train(
    dist: &TaskDistConfig,
    world: &WorldConfig,
    init: PolicyParams,
    cfg: &MetaConfig,
    key: StreamKey,
) -> Result<(PolicyParams, Vec<MetaCurvePoint>)> {
    dist.validate()?;
    world.validate()?;
    meta_train_with(init, cfg, key, |it, i| {
        let spec = sample_task(dist, world, &mut training_task_stream(key, it, i).rng())?;
        TrackingTask::new(world.clone(), spec)
    })
}
