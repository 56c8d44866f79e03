//! Soft actor-critic for the delta-prediction environment.
//!
//! The agent pairs a squashed-Gaussian actor with twin distributional
//! critics regressed by quantile Huber loss. Action values are summarized as
//! the mean over predicted quantiles; twin critics are aggregated by taking
//! the minimum of those means. The entropy temperature is tuned
//! automatically toward a fixed target entropy, parameterized through its
//! logarithm so it stays positive.

pub mod buffer;

pub use buffer::{ReplayBuffer, Transition};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::approx::checkpoint::{AdamState, Checkpoint, CheckpointError};
use crate::approx::heads::{
    bound_to_unit, log_std_grad_mask, midpoint_fractions, quantile_huber_loss_grad,
    squashed_gaussian_sample, squashed_sample_with_noise, Bounds, GaussianHeadOutput,
};
use crate::approx::{batch_grad, policy_arch, Adam, Mlp, MlpArch, POLICY_OUTPUT_SCALE};
use crate::dynsys::Scaler;
use crate::fwdenv::{DeltaAction, StackedObservation};
use crate::par;

/// Huber kernel width for quantile regression.
pub const QUANTILE_HUBER_KAPPA: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum SacError {
    #[error("non-finite loss {loss} at batch item {index}")]
    NonFinite { index: usize, loss: f64 },
}

/// Hyperparameters. `for_action_dim` fills in the defaults: batch 1024,
/// 64 quantiles, discount 0.99, target smoothing 0.005, learning rates 3e-4,
/// target entropy minus the action dimension, 10 updates per episode, a
/// million-transition buffer, and two hidden layers of 64 units.
#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub batch_size: usize,
    pub n_quantiles: usize,
    pub gamma: f64,
    pub tau_soft: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_alpha: f64,
    pub target_entropy: f64,
    pub updates_per_episode: usize,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
}

impl SacConfig {
    pub fn for_action_dim(action_dim: usize) -> Self {
        Self {
            batch_size: 1 << 10,
            n_quantiles: 64,
            gamma: 0.99,
            tau_soft: 0.005,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_alpha: 3e-4,
            target_entropy: -(action_dim as f64),
            updates_per_episode: 10,
            buffer_capacity: 1_000_000,
            hidden: vec![64, 64],
        }
    }

    fn validate(&self) {
        assert!(self.batch_size >= 1);
        assert!(self.n_quantiles >= 1);
        assert!((0.0..=1.0).contains(&self.gamma), "discount out of range");
        assert!(self.tau_soft > 0.0 && self.tau_soft <= 1.0);
        assert!(self.lr_actor > 0.0 && self.lr_critic > 0.0 && self.lr_alpha > 0.0);
        assert!(self.updates_per_episode >= 1);
        assert!(self.buffer_capacity >= 1);
        assert!(!self.hidden.is_empty());
    }
}

/// Loss values from one gradient step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
}

/// Whether an update actually stepped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    /// Buffer smaller than a batch; nothing changed.
    Skipped,
    Stepped(Losses),
}

/// The agent: one actor, twin critics with target copies, a temperature,
/// and optimizer moments for each.
#[derive(Debug, Clone)]
pub struct SacAgent {
    actor: Mlp,
    critic1: Mlp,
    critic2: Mlp,
    target1: Mlp,
    target2: Mlp,
    log_alpha: f64,
    opt_actor: Adam,
    opt_critic1: Adam,
    opt_critic2: Adam,
    opt_alpha: Adam,
    scaler: Scaler,
    bounds: Bounds,
    config: SacConfig,
    taus: Vec<f64>,
    obs_dim: usize,
    action_dim: usize,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

impl SacAgent {
    /// Builds a fresh agent. The critics see the scaled observation
    /// concatenated with the action mapped to `[-1, 1]`; target critics
    /// start as exact copies of the online ones.
    pub fn new<R: Rng>(
        obs_dim: usize,
        scaler: Scaler,
        bounds: Bounds,
        config: SacConfig,
        rng: &mut R,
    ) -> Self {
        config.validate();
        let action_dim = bounds.dim();
        let actor_arch = policy_arch(obs_dim, action_dim, &config.hidden);
        let critic_arch = MlpArch::new(obs_dim + action_dim, config.hidden.clone(), config.n_quantiles);
        let mut actor = Mlp::init(actor_arch, rng);
        actor.scale_output_layer(POLICY_OUTPUT_SCALE);
        let critic1 = Mlp::init(critic_arch.clone(), rng);
        let critic2 = Mlp::init(critic_arch, rng);
        let target1 = critic1.clone();
        let target2 = critic2.clone();
        let opt_actor = Adam::new(actor.params().len(), config.lr_actor);
        let opt_critic1 = Adam::new(critic1.params().len(), config.lr_critic);
        let opt_critic2 = Adam::new(critic2.params().len(), config.lr_critic);
        let opt_alpha = Adam::new(1, config.lr_alpha);
        let taus = midpoint_fractions(config.n_quantiles);
        Self {
            actor,
            critic1,
            critic2,
            target1,
            target2,
            log_alpha: 0.0,
            opt_actor,
            opt_critic1,
            opt_critic2,
            opt_alpha,
            scaler,
            bounds,
            config,
            taus,
            obs_dim,
            action_dim,
        }
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn actor_arch(&self) -> &MlpArch {
        self.actor.arch()
    }

    /// Scales and flattens a stacked observation into network input.
    pub fn encode_obs(&self, obs: &StackedObservation) -> Vec<f64> {
        obs.flatten_scaled(&self.scaler)
    }

    /// Samples a delta action: a stochastic squashed-Gaussian draw when
    /// exploring, the squashed mean otherwise.
    pub fn sample_action<R: Rng>(
        &self,
        obs: &StackedObservation,
        explore: bool,
        rng: &mut R,
    ) -> DeltaAction {
        let encoded = self.encode_obs(obs);
        self.sample_action_encoded(&encoded, explore, rng)
    }

    /// [`SacAgent::sample_action`] on an already-encoded observation.
    pub fn sample_action_encoded<R: Rng>(
        &self,
        encoded: &[f64],
        explore: bool,
        rng: &mut R,
    ) -> DeltaAction {
        let head = GaussianHeadOutput::from_policy_output(&self.actor.forward(encoded));
        let sample = squashed_gaussian_sample(&head, &self.bounds, rng, !explore);
        DeltaAction::new(sample.action)
    }

    /// Mean over a critic's predicted quantiles at `(obs, action)`.
    fn critic_input(&self, encoded_obs: &[f64], action: &[f64]) -> Vec<f64> {
        let mut x = encoded_obs.to_vec();
        x.extend_from_slice(&bound_to_unit(&self.bounds, action));
        x
    }

    /// Per-quantile outputs of the first online critic, for diagnostics.
    pub fn critic_quantiles(&self, encoded_obs: &[f64], action: &[f64]) -> Vec<f64> {
        self.critic1.forward(&self.critic_input(encoded_obs, action))
    }

    /// One full gradient step: critics, actor, temperature, then soft
    /// target update. Draws from `rng` in a fixed order (batch indices,
    /// target-policy noise, actor noise), so the update is a deterministic
    /// function of agent state, buffer contents, and rng state.
    pub fn update<R: Rng>(
        &mut self,
        buffer: &ReplayBuffer,
        rng: &mut R,
    ) -> Result<UpdateOutcome, SacError> {
        let n = self.config.batch_size;
        if buffer.len() < n {
            return Ok(UpdateOutcome::Skipped);
        }
        let idx = buffer.sample_indices(n, rng);
        let draw_noise = |rng: &mut R| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..self.action_dim).map(|_| rng.sample(StandardNormal)).collect())
                .collect()
        };
        let target_noise = draw_noise(rng);
        let actor_noise = draw_noise(rng);
        let alpha = self.alpha();

        let targets = par::map_indexed(n, |i| {
            let tr = buffer.get(idx[i]);
            let head = GaussianHeadOutput::from_policy_output(&self.actor.forward(&tr.next_obs));
            let sample = squashed_sample_with_noise(&head, &self.bounds, &target_noise[i]);
            let x = self.critic_input(&tr.next_obs, &sample.action);
            let q1 = mean(&self.target1.forward(&x));
            let q2 = mean(&self.target2.forward(&x));
            let not_terminal = if tr.terminal { 0.0 } else { 1.0 };
            tr.reward
                + self.config.gamma * not_terminal * (q1.min(q2) - alpha * sample.log_prob)
        });

        let xs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let tr = buffer.get(idx[i]);
                self.critic_input(&tr.obs, &tr.action)
            })
            .collect();
        let taus = self.taus.clone();
        let mut critic_loss = 0.0;
        for (critic, opt) in [
            (&mut self.critic1, &mut self.opt_critic1),
            (&mut self.critic2, &mut self.opt_critic2),
        ] {
            let batch = batch_grad(
                critic,
                n,
                |i| xs[i].clone(),
                |i, out| quantile_huber_loss_grad(out, &taus, &[targets[i]], QUANTILE_HUBER_KAPPA),
            )
            .map_err(|f| SacError::NonFinite { index: f.index, loss: f.loss })?;
            critic_loss += 0.5 * batch.mean_loss;
            opt.step(critic.params_mut(), &batch.grad);
        }

        let (actor_loss, mean_log_pi) = self.actor_step(buffer, &idx, &actor_noise, alpha)?;

        let alpha_grad = -alpha * (mean_log_pi + self.config.target_entropy);
        let alpha_loss = -alpha * (mean_log_pi + self.config.target_entropy);
        let mut log_alpha_buf = [self.log_alpha];
        self.opt_alpha.step(&mut log_alpha_buf, &[alpha_grad]);
        self.log_alpha = log_alpha_buf[0];

        let tau = self.config.tau_soft;
        for (target, online) in
            [(&mut self.target1, &self.critic1), (&mut self.target2, &self.critic2)]
        {
            for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
                *t = (1.0 - tau) * *t + tau * *o;
            }
        }

        Ok(UpdateOutcome::Stepped(Losses {
            critic_loss,
            actor_loss,
            alpha_loss,
            alpha: self.alpha(),
        }))
    }

    /// Reparameterized policy-gradient step. Returns the actor loss and the
    /// batch-mean log-probability (for the temperature update).
    fn actor_step(
        &mut self,
        buffer: &ReplayBuffer,
        idx: &[usize],
        noise: &[Vec<f64>],
        alpha: f64,
    ) -> Result<(f64, f64), SacError> {
        let n = idx.len();
        let p = self.actor.params().len();
        let a = self.action_dim;
        let n_q = self.config.n_quantiles as f64;
        let acc = par::sum_vec_over(n, p + 3, |i| {
            let tr = buffer.get(idx[i]);
            let trace = self.actor.forward_trace(&tr.obs);
            let head = GaussianHeadOutput::from_policy_output(&trace.output);
            let sample = squashed_sample_with_noise(&head, &self.bounds, &noise[i]);
            let x = self.critic_input(&tr.obs, &sample.action);
            let t1 = self.critic1.forward_trace(&x);
            let t2 = self.critic2.forward_trace(&x);
            let q1 = mean(&t1.output);
            let q2 = mean(&t2.output);
            let (q_min, min_trace, min_critic) = if q1 <= q2 {
                (q1, t1, &self.critic1)
            } else {
                (q2, t2, &self.critic2)
            };
            let dout_q = vec![1.0 / n_q; self.config.n_quantiles];
            let dq_dx = min_critic.backward(&min_trace, &dout_q).dinput;
            let mask = log_std_grad_mask(&trace.output[a..]);
            let mut dhead = vec![0.0; 2 * a];
            for j in 0..a {
                let span = self.bounds.high()[j] - self.bounds.low()[j];
                let dq_da = dq_dx[self.obs_dim + j] * 2.0 / span;
                dhead[j] = alpha * sample.dlogp_dmean[j] - dq_da * sample.daction_dmean[j];
                dhead[a + j] =
                    (alpha * sample.dlogp_dlogstd[j] - dq_da * sample.daction_dlogstd[j]) * mask[j];
            }
            let grads = self.actor.backward(&trace, &dhead);
            let loss = alpha * sample.log_prob - q_min;
            let mut row = grads.dparams;
            row.push(loss);
            row.push(sample.log_prob);
            row.push(if loss.is_finite() { 0.0 } else { 1.0 });
            row
        });
        if acc[p + 2] > 0.0 {
            for (i, &b) in idx.iter().enumerate() {
                let tr = buffer.get(b);
                let head =
                    GaussianHeadOutput::from_policy_output(&self.actor.forward(&tr.obs));
                let sample = squashed_sample_with_noise(&head, &self.bounds, &noise[i]);
                let x = self.critic_input(&tr.obs, &sample.action);
                let q = mean(&self.critic1.forward(&x)).min(mean(&self.critic2.forward(&x)));
                let loss = alpha * sample.log_prob - q;
                if !loss.is_finite() {
                    return Err(SacError::NonFinite { index: i, loss });
                }
            }
        }
        let inv = 1.0 / n as f64;
        let grad: Vec<f64> = acc[..p].iter().map(|g| g * inv).collect();
        let mut params = self.actor.params().to_vec();
        self.opt_actor.step(&mut params, &grad);
        self.actor = Mlp::from_params(self.actor.arch().clone(), params);
        Ok((acc[p] * inv, acc[p + 1] * inv))
    }

    /// Packs the agent into the shared checkpoint format.
    pub fn to_checkpoint(&self, config_echo: String) -> Checkpoint {
        let adam = |o: &Adam| {
            let (t, m, v) = o.state();
            AdamState { lr: o.lr, t, m: m.to_vec(), v: v.to_vec() }
        };
        Checkpoint {
            kind: "sac".to_string(),
            config_echo,
            scaler: self.scaler.clone(),
            delta_low: self.bounds.low().to_vec(),
            delta_high: self.bounds.high().to_vec(),
            networks: vec![
                ("actor".to_string(), self.actor.clone()),
                ("critic1".to_string(), self.critic1.clone()),
                ("critic2".to_string(), self.critic2.clone()),
                ("target1".to_string(), self.target1.clone()),
                ("target2".to_string(), self.target2.clone()),
            ],
            scalars: vec![("log_alpha".to_string(), self.log_alpha)],
            adam_states: vec![
                ("opt_actor".to_string(), adam(&self.opt_actor)),
                ("opt_critic1".to_string(), adam(&self.opt_critic1)),
                ("opt_critic2".to_string(), adam(&self.opt_critic2)),
                ("opt_alpha".to_string(), adam(&self.opt_alpha)),
            ],
        }
    }

    /// Rebuilds an agent from a checkpoint plus the (re-parsed) config.
    pub fn from_checkpoint(cp: &Checkpoint, config: SacConfig) -> Result<Self, CheckpointError> {
        config.validate();
        let missing = |what: &str| CheckpointError::Corrupt(format!("missing section {what}"));
        let net = |name: &str| cp.network(name).cloned().ok_or_else(|| missing(name));
        let opt = |name: &str| -> Result<Adam, CheckpointError> {
            let s = cp.adam_state(name).ok_or_else(|| missing(name))?;
            Ok(Adam::from_state(s.lr, s.t, s.m.clone(), s.v.clone()))
        };
        let actor = net("actor")?;
        let obs_dim = actor.arch().input;
        let bounds = Bounds::new(cp.delta_low.clone(), cp.delta_high.clone());
        let action_dim = bounds.dim();
        let taus = midpoint_fractions(config.n_quantiles);
        Ok(Self {
            actor,
            critic1: net("critic1")?,
            critic2: net("critic2")?,
            target1: net("target1")?,
            target2: net("target2")?,
            log_alpha: cp.scalar("log_alpha").ok_or_else(|| missing("log_alpha"))?,
            opt_actor: opt("opt_actor")?,
            opt_critic1: opt("opt_critic1")?,
            opt_critic2: opt("opt_critic2")?,
            opt_alpha: opt("opt_alpha")?,
            scaler: cp.scaler.clone(),
            bounds,
            config,
            taus,
            obs_dim,
            action_dim,
        })
    }
}
