//! Learning one-step forward models of small dynamical systems from logged
//! trajectory data.
//!
//! The library treats model fitting as a sequential decision problem: a
//! dataset-replay environment feeds an agent stacked `(state, action)`
//! windows, the agent answers with predicted position deltas, and the reward
//! penalizes the divergence between the bootstrapped predicted trajectory and
//! the logged one. A soft actor-critic agent with quantile critics
//! ([`sac`]) and a plain supervised regressor ([`sltrain`]) share the same
//! network architecture and input pipeline, so their long-horizon rollout
//! behavior can be compared head to head.
//!
//! Module map:
//!
//! - [`dynsys`]: built-in reference systems (pendulum, mass-spring-damper),
//!   behavior policies, dataset generation, filtering, scaling, file I/O.
//! - [`fwdenv`]: the replay environment: frame stacking, delta integration,
//!   teacher re-grounding at rollout boundaries, reward shaping.
//! - [`similarity`]: trajectory losses and similarity scores.
//! - [`approx`]: MLPs with Mish activations, hand-rolled reverse-mode
//!   gradients, Adam, squashed-Gaussian and quantile heads, checkpoints.
//! - [`sac`]: the soft actor-critic agent and replay buffer.
//! - [`sltrain`]: the supervised one-step baseline.
//! - [`harness`]: training loops, evaluation protocols, metrics CSV,
//!   SVG reports, and the run configuration format used by the CLI.
//!
//! With the default `parallel` feature, embarrassingly parallel work
//! (dataset generation, batch gradients, rollout evaluation) runs on rayon;
//! outputs are schedule-independent, so results are bit-identical to the
//! sequential fallback (`--no-default-features`).

pub mod approx;
pub mod dynsys;
pub mod fwdenv;
pub mod harness;
pub mod par;
pub mod sac;
pub mod similarity;
pub mod sltrain;
