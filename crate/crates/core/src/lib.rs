//! Learned optimizers for sampling-based model predictive control.
//!
//! An MPPI controller (a diagonal Gaussian over a control sequence) is improved
//! iteratively by a neural update rule. The update rule is trained with
//! REINFORCE on a single path-following task ([`trainer`]) or meta-trained
//! across a task distribution with first-order gradient-based meta-learning
//! ([`meta`]) so that it adapts to unseen tasks in a few gradient steps.
//!
//! Module map:
//!
//! - [`world`]: task distribution, unicycle dynamics, reference paths, costs and rollouts.
//! - [`controller`]: Gaussian controller parameters, sampling, update application and
//!   the classic MPPI importance-weighted update.
//! - [`policy`]: the MLP update rule with hand-written backpropagation.
//! - [`trainer`]: optimizer episodes, the score-function gradient and single-task training.
//! - [`meta`]: inner adaptation, meta-gradients and the meta-training loop.
//! - [`bench`]: run configuration, checkpoints, evaluation, comparison and CSV export.

pub mod bench;
pub mod controller;
pub mod error;
pub mod meta;
pub mod policy;
pub mod stream;
pub mod trainer;
pub mod world;

pub use controller::{ControllerParams, ControllerUpdate};
pub use error::{Error, Result};
pub use policy::{FeatureVector, PolicyGradient, PolicyParams};
pub use stream::StreamKey;
pub use trainer::{ControlTask, EpisodeTrace, TrainConfig};
pub use world::{TaskDistConfig, TaskSpec, TrackingTask, WorldConfig};

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
///
/// Results are always returned in index order so downstream reductions stay
/// deterministic.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
