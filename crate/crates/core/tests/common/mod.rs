//! Fixtures and independent reference computations shared by the
//! integration tests.

#![allow(dead_code)]

use metaopt::policy::{Dense, PolicyParams};
use metaopt::stream::StreamKey;
use metaopt::trainer::{estimate_gradient, ControlTask, TrainConfig};
use metaopt::world::RolloutBatch;
use metaopt::{ControllerParams, FeatureVector, Result};

/// Bandit-like task on a one-step, one-channel controller. Its rollout is
/// deterministic: a single "rollout" whose cost is
/// `(μ − target)² + (log σ − log_std_target)²`.
#[derive(Clone, Debug)]
pub struct QuadraticTask {
    pub target: f64,
    pub log_std_target: f64,
    pub mean0: f64,
    pub log_std0: f64,
}

impl QuadraticTask {
    pub fn standard() -> Self {
        QuadraticTask {
            target: 1.0,
            log_std_target: -2.0,
            mean0: 0.0,
            log_std0: 0.5f64.ln(),
        }
    }

    pub fn cost(&self, mean: f64, log_std: f64) -> f64 {
        (mean - self.target).powi(2) + (log_std - self.log_std_target).powi(2)
    }

    /// With `Δm = (a0, a1) ~ N(scale·(b0, b1), s²)` and one optimizer step,
    /// the expected return is `−c(m_0) − (μ0 + scale·b0 − target)² −
    /// (log σ0 + scale·b1 − log_std_target)² − 2s²`: a concave quadratic in
    /// the biases. Returns its gradient.
    pub fn return_gradient(&self, b: [f64; 2], scale: f64) -> [f64; 2] {
        [
            -2.0 * scale * (self.mean0 + scale * b[0] - self.target),
            -2.0 * scale * (self.log_std0 + scale * b[1] - self.log_std_target),
        ]
    }

    pub fn maximizer(&self, scale: f64) -> [f64; 2] {
        [
            (self.target - self.mean0) / scale,
            (self.log_std_target - self.log_std0) / scale,
        ]
    }
}

impl ControlTask for QuadraticTask {
    fn initial_controller(&self) -> ControllerParams {
        ControllerParams::new(1, 1, vec![self.mean0], vec![self.log_std0]).unwrap()
    }

    fn rollout(&self, m: &ControllerParams, _key: StreamKey) -> Result<RolloutBatch> {
        let c = self.cost(m.mean()[0], m.log_std()[0]);
        RolloutBatch::from_parts(1, 1, 1, vec![m.mean()[0]], vec![c], vec![])
    }
}

/// Single linear layer `4 → 2` for the 1×1 controller with zero weights, so
/// the update mean is `scale · (b0, b1)` and the two biases are the only
/// parameters that move it.
pub fn toy_policy(b0: f64, b1: f64, action_log_std: f64, scale: f64) -> PolicyParams {
    let layer = Dense {
        n_in: 4,
        n_out: 2,
        weights: vec![0.0; 8],
        bias: vec![b0, b1],
    };
    PolicyParams::from_parts(vec![layer], vec![action_log_std; 2], scale).unwrap()
}

pub struct EstimatorCheck {
    /// Score-function estimate for (b0, b1).
    pub estimate: [f64; 2],
    /// Central differences of the Monte-Carlo expected return.
    pub finite_diff: [f64; 2],
    /// Closed-form gradient of the expected return.
    pub exact: [f64; 2],
}

/// Runs the literal estimator on [`QuadraticTask`] with one optimizer step
/// (`H = 1`) and compares it against finite differences of the Monte-Carlo
/// return, both averaged over `episodes` seeded episodes.
pub fn estimator_check(episodes: usize, seed: u64) -> EstimatorCheck {
    let task = QuadraticTask::standard();
    let (b0, b1, a_ls, scale) = (0.2, 0.0, 0.4f64.ln(), 1.0);
    let cfg = TrainConfig {
        horizon: 1,
        episodes,
        gamma: 1.0,
        variance_reduction: false,
        ..TrainConfig::default()
    };
    let key = StreamKey::new(seed);
    let est = estimate_gradient(&task, &toy_policy(b0, b1, a_ls, scale), &cfg, key).unwrap();
    let g = &est.grad.layers[0].bias;

    // Same key at every perturbation, so the draws are shared.
    let h = 1e-2;
    let ret = |p: PolicyParams| estimate_gradient(&task, &p, &cfg, key).unwrap().mean_return;
    let fd0 = (ret(toy_policy(b0 + h, b1, a_ls, scale)) - ret(toy_policy(b0 - h, b1, a_ls, scale)))
        / (2.0 * h);
    let fd1 = (ret(toy_policy(b0, b1 + h, a_ls, scale)) - ret(toy_policy(b0, b1 - h, a_ls, scale)))
        / (2.0 * h);

    EstimatorCheck {
        estimate: [g[0], g[1]],
        finite_diff: [fd0, fd1],
        exact: task.return_gradient([b0, b1], scale),
    }
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Seeded policy with random-ish features and actions for derivative checks.
pub fn random_case(policy: &PolicyParams, key: StreamKey) -> (FeatureVector, Vec<f64>) {
    use rand::Rng as _;
    let mut rng = key.rng();
    let phi = FeatureVector(
        (0..policy.feat_dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    );
    let mean = policy.policy_mean(&phi).unwrap();
    let a = mean
        .iter()
        .zip(policy.action_log_std())
        .map(|(m, ls)| m + ls.exp() * rng.random_range(-2.0..2.0))
        .collect();
    (phi, a)
}

/// Per-component Gaussian log-density terms of `a`, coded independently of
/// the library's density.
fn log_density_terms(policy: &PolicyParams, phi: &FeatureVector, a: &[f64]) -> Vec<f64> {
    let mu = policy.policy_mean(phi).unwrap();
    a.iter()
        .zip(&mu)
        .zip(policy.action_log_std())
        .map(|((x, m), ls)| -0.5 * ((x - m) / ls.exp()).powi(2) - ls)
        .collect()
}

/// Worst relative error between the analytic score and central differences
/// of the log-density over every parameter. Differences are taken per action
/// component before summing, which keeps cancellation error far below the
/// step size. `floor` bounds the denominator away from zero.
pub fn max_grad_error(
    policy: &PolicyParams,
    phi: &FeatureVector,
    a: &[f64],
    h: f64,
    floor: f64,
) -> f64 {
    let analytic: Vec<f64> = policy
        .grad_log_prob(phi, a)
        .unwrap()
        .values()
        .copied()
        .collect();
    let mut worst: f64 = 0.0;
    for (i, g) in analytic.iter().enumerate() {
        let shifted = |d: f64| {
            let mut p = policy.clone();
            *p.values_mut().nth(i).unwrap() += d;
            log_density_terms(&p, phi, a)
        };
        let (plus, minus) = (shifted(h), shifted(-h));
        let fd = plus.iter().zip(&minus).map(|(p, m)| p - m).sum::<f64>() / (2.0 * h);
        worst = worst.max((g - fd).abs() / fd.abs().max(g.abs()).max(floor));
    }
    worst
}
