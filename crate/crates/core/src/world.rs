//! Path-following tasks for a noisy kinematic unicycle.
//!
//! State is `(x, y, ψ)`, control is `(v, ω)`. A [`TaskSpec`] fixes the
//! reference path, process noise, cost weights, initial state and control
//! bounds; a [`WorldConfig`] fixes the constants shared by every task
//! (timestep, horizon, rollouts per controller evaluation, path speeds).

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::controller::{init_controller, ControllerParams};
use crate::error::{Error, Result};
use crate::stream::{Rng, StreamKey};

pub const STATE_DIM: usize = 3;
pub const CONTROL_DIM: usize = 2;

pub type State = [f64; STATE_DIM];
pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PathKind {
    Circle,
    Sine,
    Lemniscate,
}

impl PathKind {
    pub const ALL: [PathKind; 3] = [PathKind::Circle, PathKind::Sine, PathKind::Lemniscate];

    pub fn name(self) -> &'static str {
        match self {
            PathKind::Circle => "circle",
            PathKind::Sine => "sine",
            PathKind::Lemniscate => "lemniscate",
        }
    }
}

/// Reference path family with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum PathSpec {
    Circle { center: Point, radius: f64, phase: f64 },
    Sine { amplitude: f64, frequency: f64, phase: f64 },
    /// Lemniscate of Bernoulli with half-width `scale`.
    Lemniscate { scale: f64, phase: f64 },
}

impl PathSpec {
    pub fn kind(&self) -> PathKind {
        match self {
            PathSpec::Circle { .. } => PathKind::Circle,
            PathSpec::Sine { .. } => PathKind::Sine,
            PathSpec::Lemniscate { .. } => PathKind::Lemniscate,
        }
    }

    /// Position at continuous time `tau` (seconds).
    pub fn position(&self, world: &WorldConfig, tau: f64) -> Point {
        match *self {
            PathSpec::Circle { center, radius, phase } => {
                let a = world.omega_ref * tau + phase;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            }
            PathSpec::Sine { amplitude, frequency, phase } => {
                let x = world.arc_speed * tau;
                [x, amplitude * (frequency * x + phase).sin()]
            }
            PathSpec::Lemniscate { scale, phase } => {
                let a = world.omega_ref * tau + phase;
                let (s, c) = a.sin_cos();
                let d = 1.0 + s * s;
                [scale * c / d, scale * s * c / d]
            }
        }
    }

    /// Time derivative of [`PathSpec::position`].
    pub fn velocity(&self, world: &WorldConfig, tau: f64) -> Point {
        match *self {
            PathSpec::Circle { radius, phase, .. } => {
                let a = world.omega_ref * tau + phase;
                let r = radius * world.omega_ref;
                [-r * a.sin(), r * a.cos()]
            }
            PathSpec::Sine { amplitude, frequency, phase } => {
                let x = world.arc_speed * tau;
                [
                    world.arc_speed,
                    amplitude * frequency * world.arc_speed * (frequency * x + phase).cos(),
                ]
            }
            PathSpec::Lemniscate { .. } => {
                let h = 1e-6;
                let p = self.position(world, tau + h);
                let q = self.position(world, tau - h);
                [(p[0] - q[0]) / (2.0 * h), (p[1] - q[1]) / (2.0 * h)]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            PathSpec::Circle { center, radius, phase } => {
                radius > 0.0 && center.iter().all(|c| c.is_finite()) && phase.is_finite()
            }
            PathSpec::Sine { amplitude, frequency, phase } => {
                amplitude >= 0.0 && frequency.is_finite() && phase.is_finite() && amplitude.is_finite()
            }
            PathSpec::Lemniscate { scale, phase } => scale > 0.0 && scale.is_finite() && phase.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid path parameters {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostWeights {
    pub w_pos: f64,
    pub w_ctrl: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlBounds {
    pub lower: [f64; CONTROL_DIM],
    pub upper: [f64; CONTROL_DIM],
}

impl ControlBounds {
    pub fn clamp(&self, u: &[f64]) -> [f64; CONTROL_DIM] {
        [
            u[0].clamp(self.lower[0], self.upper[0]),
            u[1].clamp(self.lower[1], self.upper[1]),
        ]
    }
}

impl Default for ControlBounds {
    fn default() -> Self {
        ControlBounds {
            lower: [-2.0, -2.0],
            upper: [2.0, 2.0],
        }
    }
}

/// One path-following task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub path: PathSpec,
    pub noise_std: [f64; STATE_DIM],
    pub cost: CostWeights,
    pub x0: State,
    pub bounds: ControlBounds,
}

impl TaskSpec {
    /// Builds a task whose initial state sits on the path at `t = 0`, heading
    /// along the path tangent.
    pub fn on_path(
        world: &WorldConfig,
        path: PathSpec,
        noise_std: [f64; STATE_DIM],
        cost: CostWeights,
        bounds: ControlBounds,
    ) -> Self {
        let p = path.position(world, 0.0);
        let v = path.velocity(world, 0.0);
        TaskSpec {
            path,
            noise_std,
            cost,
            x0: [p[0], p[1], wrap_angle(v[1].atan2(v[0]))],
            bounds,
        }
    }

    /// Radius-1.5 circle around the origin with light process noise.
    pub fn default_circle(world: &WorldConfig) -> Self {
        Self::on_path(
            world,
            PathSpec::Circle {
                center: [0.0, 0.0],
                radius: 1.5,
                phase: 0.0,
            },
            [0.01; STATE_DIM],
            CostWeights {
                w_pos: 1.0,
                w_ctrl: 0.01,
            },
            ControlBounds::default(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.path.validate()?;
        if self.noise_std.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::config("noise_std entries must be finite and >= 0"));
        }
        if !(self.cost.w_pos >= 0.0 && self.cost.w_ctrl >= 0.0) {
            return Err(Error::config("cost weights must be >= 0"));
        }
        if (0..CONTROL_DIM).any(|i| !(self.bounds.lower[i] < self.bounds.upper[i])) {
            return Err(Error::config("control lower bounds must be below upper bounds"));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("initial state must be finite"));
        }
        Ok(())
    }
}

/// Constants shared by every task in a run.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub dt: f64,
    /// Controller horizon `T`; controllers hold `T + 1` steps.
    pub horizon: usize,
    /// Rollouts `N` per controller evaluation.
    pub n_rollouts: usize,
    /// Angular rate of the circle and lemniscate references (rad/s).
    pub omega_ref: f64,
    /// Forward speed of the sine reference along x (m/s).
    pub arc_speed: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            dt: 0.1,
            horizon: 30,
            n_rollouts: 8,
            omega_ref: 0.5,
            arc_speed: 1.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt must be positive"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if self.n_rollouts == 0 {
            return Err(Error::config("n_rollouts must be at least 1"));
        }
        if !self.omega_ref.is_finite() || !self.arc_speed.is_finite() {
            return Err(Error::config("reference speeds must be finite"));
        }
        Ok(())
    }
}

/// Uniform sampling range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Range {
    pub low: f64,
    pub high: f64,
}

impl Range {
    pub const fn new(low: f64, high: f64) -> Self {
        Range { low, high }
    }

    pub const fn fixed(v: f64) -> Self {
        Range { low: v, high: v }
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        let u: f64 = rng.random();
        if self.low == self.high {
            self.low
        } else {
            self.low + (self.high - self.low) * u
        }
    }

    fn is_valid(&self) -> bool {
        self.low.is_finite() && self.high.is_finite() && self.low <= self.high
    }
}

/// The task distribution `p(T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDistConfig {
    /// Mixture weights for circle, sine, lemniscate.
    pub kind_weights: [f64; 3],
    pub circle_radius: Range,
    pub circle_center: Range,
    pub circle_phase: Range,
    pub sine_amplitude: Range,
    pub sine_frequency: Range,
    pub sine_phase: Range,
    pub lemniscate_scale: Range,
    pub lemniscate_phase: Range,
    /// Per-dimension process noise standard deviation.
    pub noise_std: Range,
    pub cost: CostWeights,
    pub bounds: ControlBounds,
}

impl Default for TaskDistConfig {
    fn default() -> Self {
        TaskDistConfig {
            kind_weights: [0.4, 0.4, 0.2],
            circle_radius: Range::new(1.0, 2.0),
            circle_center: Range::new(-0.5, 0.5),
            circle_phase: Range::new(-PI, PI),
            sine_amplitude: Range::new(0.5, 1.5),
            sine_frequency: Range::new(0.5, 1.5),
            sine_phase: Range::new(-PI, PI),
            lemniscate_scale: Range::new(1.5, 2.5),
            lemniscate_phase: Range::new(-PI, PI),
            noise_std: Range::new(0.0, 0.02),
            cost: CostWeights {
                w_pos: 1.0,
                w_ctrl: 0.01,
            },
            bounds: ControlBounds::default(),
        }
    }
}

impl TaskDistConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("circle radius", self.circle_radius),
            ("circle center", self.circle_center),
            ("circle phase", self.circle_phase),
            ("sine amplitude", self.sine_amplitude),
            ("sine frequency", self.sine_frequency),
            ("sine phase", self.sine_phase),
            ("lemniscate scale", self.lemniscate_scale),
            ("lemniscate phase", self.lemniscate_phase),
            ("noise std", self.noise_std),
        ];
        for (name, r) in ranges {
            if !r.is_valid() {
                return Err(Error::config(format!("{name} range needs low <= high, got {r:?}")));
            }
        }
        if self.circle_radius.low <= 0.0 || self.lemniscate_scale.low <= 0.0 {
            return Err(Error::config("radius and lemniscate scale must be > 0"));
        }
        if self.sine_amplitude.low < 0.0 || self.noise_std.low < 0.0 {
            return Err(Error::config("amplitude and noise std must be >= 0"));
        }
        if self.kind_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::config("path mixture weights must be >= 0"));
        }
        let total: f64 = self.kind_weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!("path mixture weights must sum to 1, got {total}")));
        }
        if !(self.cost.w_pos >= 0.0 && self.cost.w_ctrl >= 0.0) {
            return Err(Error::config("cost weights must be >= 0"));
        }
        if (0..CONTROL_DIM).any(|i| !(self.bounds.lower[i] < self.bounds.upper[i])) {
            return Err(Error::config("control lower bounds must be below upper bounds"));
        }
        Ok(())
    }
}

/// Draws one task from `dist`.
pub fn sample_task(dist: &TaskDistConfig, world: &WorldConfig, rng: &mut Rng) -> Result<TaskSpec> {
    dist.validate()?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut kind = PathKind::ALL[0];
    for (k, w) in PathKind::ALL.iter().zip(dist.kind_weights) {
        acc += w;
        if w > 0.0 {
            kind = *k;
            if u < acc {
                break;
            }
        }
    }
    let path = match kind {
        PathKind::Circle => PathSpec::Circle {
            radius: dist.circle_radius.sample(rng),
            center: [dist.circle_center.sample(rng), dist.circle_center.sample(rng)],
            phase: dist.circle_phase.sample(rng),
        },
        PathKind::Sine => PathSpec::Sine {
            amplitude: dist.sine_amplitude.sample(rng),
            frequency: dist.sine_frequency.sample(rng),
            phase: dist.sine_phase.sample(rng),
        },
        PathKind::Lemniscate => PathSpec::Lemniscate {
            scale: dist.lemniscate_scale.sample(rng),
            phase: dist.lemniscate_phase.sample(rng),
        },
    };
    let noise_std = [
        dist.noise_std.sample(rng),
        dist.noise_std.sample(rng),
        dist.noise_std.sample(rng),
    ];
    let task = TaskSpec::on_path(world, path, noise_std, dist.cost, dist.bounds);
    task.validate()?;
    Ok(task)
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// `N x (T+1)` sampled controls, stage costs and the `N x (T+2)` visited states.
///
/// Stage cost `c_t` scores the control `u_t` together with the state it
/// produces, `x_{t+1}`, against the reference at step `t + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBatch {
    n: usize,
    steps: usize,
    m_dim: usize,
    controls: Vec<f64>,
    costs: Vec<f64>,
    states: Vec<f64>,
}

impl RolloutBatch {
    /// Assembles a batch from raw tensors, checking shapes and cost invariants.
    pub fn from_parts(
        n: usize,
        steps: usize,
        m_dim: usize,
        controls: Vec<f64>,
        costs: Vec<f64>,
        states: Vec<f64>,
    ) -> Result<Self> {
        if controls.len() != n * steps * m_dim || costs.len() != n * steps {
            return Err(Error::config("rollout batch tensors have inconsistent shapes"));
        }
        if !states.is_empty() && states.len() != n * (steps + 1) * STATE_DIM {
            return Err(Error::config("rollout batch states have an inconsistent shape"));
        }
        if costs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::numeric("stage costs must be finite and >= 0"));
        }
        Ok(RolloutBatch {
            n,
            steps,
            m_dim,
            controls,
            costs,
            states,
        })
    }

    pub fn n_rollouts(&self) -> usize {
        self.n
    }

    /// Horizon steps `T + 1`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn m_dim(&self) -> usize {
        self.m_dim
    }

    pub fn controls_of(&self, i: usize) -> &[f64] {
        let w = self.steps * self.m_dim;
        &self.controls[i * w..(i + 1) * w]
    }

    pub fn control(&self, i: usize, t: usize) -> &[f64] {
        let start = (i * self.steps + t) * self.m_dim;
        &self.controls[start..start + self.m_dim]
    }

    pub fn costs_of(&self, i: usize) -> &[f64] {
        &self.costs[i * self.steps..(i + 1) * self.steps]
    }

    pub fn cost(&self, i: usize, t: usize) -> f64 {
        self.costs[i * self.steps + t]
    }

    /// State `x_t` of rollout `i`, `t` in `0..=T+1`. Empty batches from
    /// synthetic tasks carry no states.
    pub fn state(&self, i: usize, t: usize) -> State {
        let start = (i * (self.steps + 1) + t) * STATE_DIM;
        [self.states[start], self.states[start + 1], self.states[start + 2]]
    }

    pub fn has_states(&self) -> bool {
        !self.states.is_empty()
    }

    pub fn all_costs(&self) -> &[f64] {
        &self.costs
    }

    /// `S_i = Σ_t c_{i,t}` per rollout.
    pub fn total_costs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.costs_of(i).iter().sum()).collect()
    }

    /// Mean of every stage cost in the batch.
    pub fn mean_cost(&self) -> f64 {
        self.costs.iter().sum::<f64>() / self.costs.len() as f64
    }

    /// Per-step cost averaged over rollouts, length `T + 1`.
    pub fn step_mean_costs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.steps];
        for i in 0..self.n {
            for (o, c) in out.iter_mut().zip(self.costs_of(i)) {
                *o += c;
            }
        }
        for o in &mut out {
            *o /= self.n as f64;
        }
        out
    }
}

/// A task bound to the world constants; the unit the trainers operate on.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingTask {
    pub world: WorldConfig,
    pub spec: TaskSpec,
}

impl TrackingTask {
    pub fn new(world: WorldConfig, spec: TaskSpec) -> Result<Self> {
        world.validate()?;
        spec.validate()?;
        Ok(TrackingTask { world, spec })
    }

    /// Target planar position at step `t`.
    pub fn reference_point(&self, t: usize) -> Point {
        self.spec.path.position(&self.world, t as f64 * self.world.dt)
    }

    /// One forward-Euler unicycle step with additive Gaussian process noise.
    pub fn step_dynamics(&self, x: &State, u: &[f64], rng: &mut Rng) -> Result<State> {
        if x.iter().chain(u).any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite dynamics input x={x:?} u={u:?}")));
        }
        let u = self.spec.bounds.clamp(u);
        let dt = self.world.dt;
        let (s, c) = x[2].sin_cos();
        let mut next = [x[0] + dt * u[0] * c, x[1] + dt * u[0] * s, x[2] + dt * u[1]];
        for (v, sd) in next.iter_mut().zip(self.spec.noise_std) {
            let z: f64 = rng.sample(StandardNormal);
            *v += sd * z;
        }
        next[2] = wrap_angle(next[2]);
        Ok(next)
    }

    /// `w_pos·‖p − ref(t)‖² + w_ctrl·‖u‖²`.
    pub fn stage_cost(&self, x: &State, u: &[f64], t: usize) -> f64 {
        let r = self.reference_point(t);
        let dx = x[0] - r[0];
        let dy = x[1] - r[1];
        let effort: f64 = u.iter().map(|v| v * v).sum();
        self.spec.cost.w_pos * (dx * dx + dy * dy) + self.spec.cost.w_ctrl * effort
    }

    /// Executes a fixed control sequence from `x0`. Returns `T + 2` states and
    /// `T + 1` stage costs; controls are clamped to the bounds first.
    pub fn simulate(&self, controls: &[f64], rng: &mut Rng) -> Result<(Vec<State>, Vec<f64>)> {
        let steps = self.world.horizon + 1;
        if controls.len() != steps * CONTROL_DIM {
            return Err(Error::config(format!(
                "control sequence must have {} entries, got {}",
                steps * CONTROL_DIM,
                controls.len()
            )));
        }
        let mut states = Vec::with_capacity(steps + 1);
        let mut costs = Vec::with_capacity(steps);
        let mut x = self.spec.x0;
        states.push(x);
        for t in 0..steps {
            let u = self.spec.bounds.clamp(&controls[t * CONTROL_DIM..(t + 1) * CONTROL_DIM]);
            x = self.step_dynamics(&x, &u, rng)?;
            costs.push(self.stage_cost(&x, &u, t + 1));
            states.push(x);
        }
        Ok((states, costs))
    }

    /// Samples `n_rollouts` control sequences from `m` and executes each one.
    ///
    /// Rollout `i` draws its controls and its process noise from `key.child(i)`.
    pub fn rollout(&self, m: &ControllerParams, n_rollouts: usize, key: StreamKey) -> Result<RolloutBatch> {
        if n_rollouts == 0 {
            return Err(Error::config("rollout needs n_rollouts >= 1"));
        }
        if m.steps() != self.world.horizon + 1 || m.m_dim() != CONTROL_DIM {
            return Err(Error::config(format!(
                "controller is {}x{}, task expects {}x{}",
                m.steps(),
                m.m_dim(),
                self.world.horizon + 1,
                CONTROL_DIM
            )));
        }
        let steps = m.steps();
        let mut controls = Vec::with_capacity(n_rollouts * steps * CONTROL_DIM);
        let mut costs = Vec::with_capacity(n_rollouts * steps);
        let mut states = Vec::with_capacity(n_rollouts * (steps + 1) * STATE_DIM);
        for i in 0..n_rollouts {
            let mut rng = key.child(i as u64).rng();
            let raw = m.sample_controls(&mut rng);
            let clamped: Vec<f64> = raw
                .chunks_exact(CONTROL_DIM)
                .flat_map(|u| self.spec.bounds.clamp(u))
                .collect();
            let (xs, cs) = self.simulate(&clamped, &mut rng)?;
            controls.extend_from_slice(&clamped);
            costs.extend_from_slice(&cs);
            states.extend(xs.iter().flatten());
        }
        RolloutBatch::from_parts(n_rollouts, steps, CONTROL_DIM, controls, costs, states)
    }

    pub fn initial_controller(&self) -> ControllerParams {
        init_controller(self.world.horizon, CONTROL_DIM)
    }
}
