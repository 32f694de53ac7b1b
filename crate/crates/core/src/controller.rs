//! The Gaussian MPPI controller `m = [mean, log_std]` and its updates.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stream::Rng;
use crate::world::RolloutBatch;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Initial standard deviation of a fresh controller.
pub const INIT_STD: f64 = 0.5;

/// Per-step control means and log standard deviations over a horizon.
///
/// Both tensors are `steps x m_dim`, stored row-major (step-major), where
/// `steps = T + 1`. The standard deviation is `exp(log_std)`, kept inside
/// `[LOG_STD_MIN, LOG_STD_MAX]` by every update.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerParams {
    steps: usize,
    m_dim: usize,
    mean: Vec<f64>,
    log_std: Vec<f64>,
}

/// An additive change `Δm` to a controller, shaped like [`ControllerParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerUpdate {
    steps: usize,
    m_dim: usize,
    pub d_mean: Vec<f64>,
    pub d_log_std: Vec<f64>,
}

/// Zero-mean controller with `σ = 0.5` on every entry.
pub fn init_controller(horizon: usize, m_dim: usize) -> ControllerParams {
    ControllerParams::new(
        horizon + 1,
        m_dim,
        vec![0.0; (horizon + 1) * m_dim],
        vec![INIT_STD.ln(); (horizon + 1) * m_dim],
    )
    .expect("valid init shape")
}

impl ControllerParams {
    pub fn new(steps: usize, m_dim: usize, mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        let n = steps * m_dim;
        if steps == 0 || m_dim == 0 {
            return Err(Error::config("controller needs at least one step and one channel"));
        }
        if mean.len() != n || log_std.len() != n {
            return Err(Error::config(format!(
                "controller tensors must have {n} entries, got mean {} and log_std {}",
                mean.len(),
                log_std.len()
            )));
        }
        if mean.iter().chain(&log_std).any(|v| !v.is_finite()) {
            return Err(Error::numeric("controller entries must be finite"));
        }
        let log_std = log_std
            .into_iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        Ok(ControllerParams {
            steps,
            m_dim,
            mean,
            log_std,
        })
    }

    /// Number of horizon steps, `T + 1`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> usize {
        self.steps - 1
    }

    pub fn m_dim(&self) -> usize {
        self.m_dim
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn mean_at(&self, t: usize) -> &[f64] {
        &self.mean[t * self.m_dim..(t + 1) * self.m_dim]
    }

    pub fn std(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_std.iter().map(|l| l.exp())
    }

    /// Draws `u_t ~ N(mean_t, exp(log_std_t)^2)` independently per entry.
    pub fn sample_controls(&self, rng: &mut Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(&mu, &ls)| {
                let z: f64 = rng.sample(StandardNormal);
                mu + ls.exp() * z
            })
            .collect()
    }

    /// `m + Δ`, with the log standard deviation re-clamped.
    pub fn apply_update(&self, update: &ControllerUpdate) -> Result<ControllerParams> {
        if update.steps != self.steps || update.m_dim != self.m_dim {
            return Err(Error::config(format!(
                "update shape {}x{} does not match controller {}x{}",
                update.steps, update.m_dim, self.steps, self.m_dim
            )));
        }
        let mean: Vec<f64> = self.mean.iter().zip(&update.d_mean).map(|(a, b)| a + b).collect();
        let log_std: Vec<f64> = self
            .log_std
            .iter()
            .zip(&update.d_log_std)
            .map(|(a, b)| (a + b).clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        if mean.iter().chain(&log_std).any(|v| !v.is_finite()) {
            return Err(Error::numeric("controller update produced non-finite entries"));
        }
        Ok(ControllerParams {
            steps: self.steps,
            m_dim: self.m_dim,
            mean,
            log_std,
        })
    }

    /// Classic MPPI: importance-weight sampled sequences by exponentiated total cost.
    ///
    /// The log standard deviation is left untouched.
    pub fn baseline_mppi_update(&self, batch: &RolloutBatch, temperature: f64) -> Result<ControllerParams> {
        if batch.n_rollouts() == 0 {
            return Err(Error::config("MPPI update needs at least one rollout"));
        }
        if batch.steps() != self.steps || batch.m_dim() != self.m_dim {
            return Err(Error::config("rollout batch shape does not match controller"));
        }
        let weights = mppi_weights(&batch.total_costs(), temperature)?;
        let mut mean = vec![0.0; self.mean.len()];
        for (i, w) in weights.iter().enumerate() {
            for (m, u) in mean.iter_mut().zip(batch.controls_of(i)) {
                *m += w * u;
            }
        }
        Ok(ControllerParams {
            steps: self.steps,
            m_dim: self.m_dim,
            mean,
            log_std: self.log_std.clone(),
        })
    }
}

/// Normalized weights `exp(-(S_i - min S) / temperature)`.
pub fn mppi_weights(total_costs: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if total_costs.is_empty() {
        return Err(Error::config("MPPI weights need at least one rollout"));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::config(format!("MPPI temperature must be positive, got {temperature}")));
    }
    if total_costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::numeric("rollout costs must be finite"));
    }
    let min = total_costs.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = total_costs.iter().map(|s| (-(s - min) / temperature).exp()).collect();
    // the minimizer contributes exp(0) = 1, so the sum is >= 1
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / sum).collect())
}

impl ControllerUpdate {
    pub fn zeros(steps: usize, m_dim: usize) -> Self {
        ControllerUpdate {
            steps,
            m_dim,
            d_mean: vec![0.0; steps * m_dim],
            d_log_std: vec![0.0; steps * m_dim],
        }
    }

    pub fn new(steps: usize, m_dim: usize, d_mean: Vec<f64>, d_log_std: Vec<f64>) -> Result<Self> {
        let n = steps * m_dim;
        if d_mean.len() != n || d_log_std.len() != n {
            return Err(Error::config(format!("controller update tensors must have {n} entries")));
        }
        if d_mean.iter().chain(&d_log_std).any(|v| !v.is_finite()) {
            return Err(Error::numeric("controller update entries must be finite"));
        }
        Ok(ControllerUpdate {
            steps,
            m_dim,
            d_mean,
            d_log_std,
        })
    }

    /// Splits a flat policy action into `(d_mean, d_log_std)` halves.
    pub fn from_action(steps: usize, m_dim: usize, action: &[f64]) -> Result<Self> {
        let n = steps * m_dim;
        if action.len() != 2 * n {
            return Err(Error::config(format!(
                "action of length {} cannot update a {steps}x{m_dim} controller",
                action.len()
            )));
        }
        Self::new(steps, m_dim, action[..n].to_vec(), action[n..].to_vec())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn m_dim(&self) -> usize {
        self.m_dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::StreamKey;

    #[test]
    fn init_shape_and_values() {
        let m = init_controller(30, 2);
        assert_eq!(m.steps(), 31);
        assert_eq!(m.len(), 62);
        assert!(m.mean().iter().all(|&v| v == 0.0));
        assert!(m.std().all(|s| (s - 0.5).abs() < 1e-15));
        assert_eq!(m, init_controller(30, 2));
    }

    #[test]
    fn vanishing_std_returns_mean() {
        let mean: Vec<f64> = (0..8).map(|i| i as f64 * 0.25 - 1.0).collect();
        let m = ControllerParams::new(4, 2, mean.clone(), vec![-20.0; 8]).unwrap();
        let u = m.sample_controls(&mut StreamKey::new(3).rng());
        for (a, b) in u.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let m = init_controller(5, 2);
        let a = m.sample_controls(&mut StreamKey::new(11).rng());
        let b = m.sample_controls(&mut StreamKey::new(11).rng());
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_matches_distribution() {
        let m = ControllerParams::new(1, 1, vec![0.3], vec![0.5f64.ln()]).unwrap();
        let mut rng = StreamKey::new(2024).rng();
        let n = 100_000;
        let sum: f64 = (0..n).map(|_| m.sample_controls(&mut rng)[0]).sum();
        let mean = sum / n as f64;
        assert!((mean - 0.3).abs() < 3.0 * 0.5 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn apply_update_adds_and_clamps() {
        let m = ControllerParams::new(1, 3, vec![1.0, 2.0, 3.0], vec![0.0, 1.95, -19.9]).unwrap();
        let zero = ControllerUpdate::zeros(1, 3);
        assert_eq!(m.apply_update(&zero).unwrap(), m);

        let up = ControllerUpdate::new(1, 3, vec![0.5, 0.0, -1.0], vec![0.1, 0.2, -1.0]).unwrap();
        let next = m.apply_update(&up).unwrap();
        assert_eq!(next.mean(), &[1.5, 2.0, 2.0]);
        assert!((next.log_std()[0] - 0.1).abs() < 1e-15);
        assert_eq!(next.log_std()[1], 2.0);
        assert_eq!(next.log_std()[2], -20.0);
        // input untouched
        assert_eq!(m.log_std(), &[0.0, 1.95, -19.9]);
    }

    #[test]
    fn apply_update_rejects_shape_mismatch() {
        let m = init_controller(3, 2);
        let up = ControllerUpdate::zeros(3, 2);
        assert!(matches!(m.apply_update(&up), Err(Error::Config(_))));
    }

    #[test]
    fn mppi_weights_two_rollouts() {
        let w = mppi_weights(&[1.0, 3.0], 1.0).unwrap();
        let e = (-2.0f64).exp();
        assert!((w[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((w[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((w[0] - 0.8808).abs() < 1e-4);
        assert!((w[1] - 0.1192).abs() < 1e-4);
    }

    #[test]
    fn mppi_weights_errors() {
        assert!(mppi_weights(&[], 1.0).is_err());
        assert!(mppi_weights(&[1.0], 0.0).is_err());
        assert!(mppi_weights(&[f64::NAN], 1.0).is_err());
    }

    #[test]
    fn mppi_weights_uniform_and_argmin_limit() {
        let w = mppi_weights(&[2.0; 5], 0.7).unwrap();
        assert!(w.iter().all(|&x| (x - 0.2).abs() < 1e-15));
        let w = mppi_weights(&[4.0, 1.0, 2.5], 1e-6).unwrap();
        assert_eq!(w, vec![0.0, 1.0, 0.0]);
    }
}
