//! The learned update rule `π_θ(Δm | m, D)`.
//!
//! A tanh MLP maps a fixed-size encoding of the controller and its rollout
//! data to the mean of a diagonal Gaussian over `Δm`; the Gaussian's log
//! standard deviation is a free, state-independent parameter vector. Log
//! densities and their exact gradients with respect to every parameter are
//! computed here with hand-written backpropagation.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::controller::{ControllerParams, ControllerUpdate};
use crate::error::{Error, Result};
use crate::stream::Rng;
use crate::world::RolloutBatch;

pub const ACTION_LOG_STD_MIN: f64 = -10.0;
pub const ACTION_LOG_STD_MAX: f64 = 1.0;

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
pub const DEFAULT_OUTPUT_SCALE: f64 = 0.1;

/// Initial action standard deviation, `0.05`.
pub fn default_init_log_std() -> f64 {
    0.05f64.ln()
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Fully connected layer; `weights` is `n_out x n_in`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.n_in)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }
}

/// Encoding of `(m_k, D_k, k/H)` fed to the policy.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Feature length for a controller with `steps = T + 1` rows of `m_dim` channels.
pub fn feature_dim(steps: usize, m_dim: usize) -> usize {
    2 * steps * m_dim + steps + 1
}

/// Action length: one entry per controller mean and log-std.
pub fn action_dim(steps: usize, m_dim: usize) -> usize {
    2 * steps * m_dim
}

/// Concatenates the flattened mean, the flattened log-std, the standardized
/// per-step mean cost and the episode progress `k / H`.
pub fn encode_features(m: &ControllerParams, batch: &RolloutBatch, k: usize, horizon: usize) -> FeatureVector {
    let costs = batch.step_mean_costs();
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    let sd = var.max(1e-8).sqrt();
    let progress = if horizon == 0 { 0.0 } else { k as f64 / horizon as f64 };

    let mut out = Vec::with_capacity(feature_dim(m.steps(), m.m_dim()));
    out.extend_from_slice(m.mean());
    out.extend_from_slice(m.log_std());
    out.extend(costs.iter().map(|c| (c - mean) / sd));
    out.push(progress);
    FeatureVector(out)
}

/// Policy weights `θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    layers: Vec<Dense>,
    action_log_std: Vec<f64>,
    output_scale: f64,
}

/// Gradient with the same layout as [`PolicyParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGradient {
    pub layers: Vec<Dense>,
    pub action_log_std: Vec<f64>,
}

/// One draw from the policy together with its log-density.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledUpdate {
    pub action: Vec<f64>,
    pub update: ControllerUpdate,
    pub log_prob: f64,
}

struct Activations {
    /// Input to each layer; `inputs[0]` is the feature vector.
    inputs: Vec<Vec<f64>>,
    mean: Vec<f64>,
}

impl PolicyParams {
    /// Glorot-uniform weights, zero biases, constant action log-std.
    ///
    /// `sizes` lists every layer width from the feature dimension to the
    /// action dimension, e.g. `[156, 64, 64, 124]`.
    pub fn init(sizes: &[usize], init_log_std: f64, output_scale: f64, rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let limit = (6.0 / (n_in + n_out) as f64).sqrt();
                let weights = (0..n_in * n_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Dense {
                    n_in,
                    n_out,
                    weights,
                    bias: vec![0.0; n_out],
                }
            })
            .collect();
        let act_dim = sizes[sizes.len() - 1];
        Self::from_parts(layers, vec![init_log_std; act_dim], output_scale)
    }

    /// Default architecture for a controller with `steps` rows and `m_dim` channels.
    pub fn init_default(steps: usize, m_dim: usize, rng: &mut Rng) -> Result<Self> {
        let sizes = [
            feature_dim(steps, m_dim),
            DEFAULT_HIDDEN[0],
            DEFAULT_HIDDEN[1],
            action_dim(steps, m_dim),
        ];
        Self::init(&sizes, default_init_log_std(), DEFAULT_OUTPUT_SCALE, rng)
    }

    pub fn from_parts(layers: Vec<Dense>, action_log_std: Vec<f64>, output_scale: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("policy needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.n_in * l.n_out || l.bias.len() != l.n_out || l.n_in == 0 || l.n_out == 0 {
                return Err(Error::config(format!("layer {i} has inconsistent dimensions")));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].n_out != w[1].n_in {
                return Err(Error::config(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    w[0].n_out,
                    i + 1,
                    w[1].n_in
                )));
            }
        }
        if action_log_std.len() != layers[layers.len() - 1].n_out {
            return Err(Error::config("action_log_std length must equal the action dimension"));
        }
        if !output_scale.is_finite() {
            return Err(Error::config("output scale must be finite"));
        }
        let params = PolicyParams {
            layers,
            action_log_std: action_log_std
                .into_iter()
                .map(|v| v.clamp(ACTION_LOG_STD_MIN, ACTION_LOG_STD_MAX))
                .collect(),
            output_scale,
        };
        if params.values().any(|v| !v.is_finite()) {
            return Err(Error::numeric("policy parameters must be finite"));
        }
        Ok(params)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn action_log_std(&self) -> &[f64] {
        &self.action_log_std
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn with_output_scale(mut self, scale: f64) -> Self {
        self.output_scale = scale;
        self
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].n_in)
            .chain(self.layers.iter().map(|l| l.n_out))
            .collect()
    }

    pub fn feat_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn act_dim(&self) -> usize {
        self.action_log_std.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum::<usize>() + self.action_log_std.len()
    }

    /// Every trainable value in checkpoint order: per layer the weights
    /// (row-major) then the biases, followed by the action log-std.
    pub fn values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .chain(&self.action_log_std)
    }

    /// Mutable view in [`PolicyParams::values`] order. Callers are responsible
    /// for keeping values finite; the log-std clamp is not re-applied.
    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
            .chain(self.action_log_std.iter_mut())
    }

    fn check_features(&self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.feat_dim() {
            return Err(Error::config(format!(
                "feature vector has {} entries, policy expects {}",
                phi.len(),
                self.feat_dim()
            )));
        }
        Ok(())
    }

    fn forward(&self, phi: &[f64]) -> Result<Activations> {
        self.check_features(phi)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = phi.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&h);
            inputs.push(h);
            h = if i == last {
                z.into_iter().map(|v| v * self.output_scale).collect()
            } else {
                z.into_iter().map(f64::tanh).collect()
            };
        }
        Ok(Activations { inputs, mean: h })
    }

    /// Mean update `output_scale · MLP(φ)`.
    pub fn policy_mean(&self, phi: &FeatureVector) -> Result<Vec<f64>> {
        Ok(self.forward(&phi.0)?.mean)
    }

    fn check_action(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.act_dim() {
            return Err(Error::config(format!(
                "action has {} entries, policy expects {}",
                a.len(),
                self.act_dim()
            )));
        }
        Ok(())
    }

    fn density(&self, mean: &[f64], a: &[f64]) -> f64 {
        mean.iter()
            .zip(a)
            .zip(&self.action_log_std)
            .map(|((mu, x), ls)| {
                let z = (x - mu) / ls.exp();
                -0.5 * z * z - ls - HALF_LN_2PI
            })
            .sum()
    }

    /// Diagonal-Gaussian log-density of action `a`.
    pub fn log_prob(&self, phi: &FeatureVector, a: &[f64]) -> Result<f64> {
        self.check_action(a)?;
        let mean = self.policy_mean(phi)?;
        Ok(self.density(&mean, a))
    }

    /// Exact gradient of [`PolicyParams::log_prob`] with respect to every parameter.
    pub fn grad_log_prob(&self, phi: &FeatureVector, a: &[f64]) -> Result<PolicyGradient> {
        Ok(self.log_prob_and_grad(phi, a)?.1)
    }

    pub fn log_prob_and_grad(&self, phi: &FeatureVector, a: &[f64]) -> Result<(f64, PolicyGradient)> {
        self.check_action(a)?;
        let acts = self.forward(&phi.0)?;
        let log_prob = self.density(&acts.mean, a);

        let mut d_log_std = Vec::with_capacity(a.len());
        // d logp / d (pre-scale output)
        let mut delta: Vec<f64> = Vec::with_capacity(a.len());
        for ((x, mu), ls) in a.iter().zip(&acts.mean).zip(&self.action_log_std) {
            let inv_var = (-2.0 * ls).exp();
            let diff = x - mu;
            delta.push(diff * inv_var * self.output_scale);
            d_log_std.push(diff * diff * inv_var - 1.0);
        }

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts.inputs[i];
            let mut g = Dense::zeros(layer.n_in, layer.n_out);
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] = *d;
                let row = &mut g.weights[o * layer.n_in..(o + 1) * layer.n_in];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw = d * x;
                }
            }
            grads.push(g);
            if i > 0 {
                // input[i] = tanh(z_{i-1}), so dz = dh * (1 - h^2)
                let mut next = vec![0.0; layer.n_in];
                for (o, d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += w * d;
                    }
                }
                for (n, h) in next.iter_mut().zip(input) {
                    *n *= 1.0 - h * h;
                }
                delta = next;
            }
        }
        grads.reverse();
        Ok((
            log_prob,
            PolicyGradient {
                layers: grads,
                action_log_std: d_log_std,
            },
        ))
    }

    /// Draws `a ~ N(policy_mean, diag(exp(action_log_std)^2))` and splits it
    /// into a controller update for a `steps x m_dim` controller.
    pub fn sample_update(&self, phi: &FeatureVector, steps: usize, m_dim: usize, rng: &mut Rng) -> Result<SampledUpdate> {
        let mean = self.policy_mean(phi)?;
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.action_log_std)
            .map(|(mu, ls)| {
                let z: f64 = rng.sample(StandardNormal);
                mu + ls.exp() * z
            })
            .collect();
        let log_prob = self.density(&mean, &action);
        let update = ControllerUpdate::from_action(steps, m_dim, &action)?;
        Ok(SampledUpdate {
            action,
            update,
            log_prob,
        })
    }

    /// `θ + step · g` with the action log-std re-clamped; no gradient clipping.
    pub fn ascend(&self, g: &PolicyGradient, step: f64) -> Result<PolicyParams> {
        g.check_shape(self)?;
        let mut out = self.clone();
        for (l, gl) in out.layers.iter_mut().zip(&g.layers) {
            for (p, d) in l.weights.iter_mut().zip(&gl.weights) {
                *p += step * d;
            }
            for (p, d) in l.bias.iter_mut().zip(&gl.bias) {
                *p += step * d;
            }
        }
        for (p, d) in out.action_log_std.iter_mut().zip(&g.action_log_std) {
            *p = (*p + step * d).clamp(ACTION_LOG_STD_MIN, ACTION_LOG_STD_MAX);
        }
        if out.values().any(|v| !v.is_finite()) {
            return Err(Error::numeric("policy update produced non-finite parameters"));
        }
        Ok(out)
    }
}

impl PolicyGradient {
    pub fn zeros_like(p: &PolicyParams) -> Self {
        PolicyGradient {
            layers: p.layers.iter().map(|l| Dense::zeros(l.n_in, l.n_out)).collect(),
            action_log_std: vec![0.0; p.act_dim()],
        }
    }

    fn check_shape(&self, p: &PolicyParams) -> Result<()> {
        let same = self.layers.len() == p.layers.len()
            && self
                .layers
                .iter()
                .zip(&p.layers)
                .all(|(a, b)| a.n_in == b.n_in && a.n_out == b.n_out)
            && self.action_log_std.len() == p.action_log_std.len();
        if same {
            Ok(())
        } else {
            Err(Error::config("gradient shape does not match policy"))
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .chain(&self.action_log_std)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
            .chain(self.action_log_std.iter_mut())
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &PolicyGradient, scale: f64) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.values_mut() {
            *v *= s;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Rescales to global L2 norm `max_norm` when larger. `max_norm <= 0` or
    /// infinite disables clipping.
    pub fn clip_norm(&mut self, max_norm: f64) {
        if !(max_norm > 0.0) || max_norm.is_infinite() {
            return;
        }
        let n = self.norm();
        if n > max_norm {
            self.scale(max_norm / n);
        }
    }
}
