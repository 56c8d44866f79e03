//! Supervised one-step baseline: the same policy network as the actor,
//! regressed by MSE on windows drawn straight from the dataset.
//!
//! Each example stacks the true `(state, action)` frames ending at step `t`
//! (padded exactly like an environment reset) and targets the position delta
//! from `t` to `t + 1`. Targets are regressed in the policy's bounded unit
//! space, so the supervised policy and the actor share one architecture, one
//! scaling pipeline, and one output mapping. No rewards, no replay buffer.

use rand::Rng;

use crate::approx::checkpoint::{AdamState, Checkpoint, CheckpointError};
use crate::approx::heads::{bound_to_unit, unit_to_bound, Bounds};
use crate::approx::{batch_grad, policy_arch, Adam, Mlp, POLICY_OUTPUT_SCALE};
use crate::dynsys::{Dataset, Episode, Scaler, SystemSpec};
use crate::fwdenv::{true_position_delta, DeltaAction};

#[derive(Debug, thiserror::Error)]
pub enum SlError {
    #[error("non-finite loss {loss} at batch item {index}")]
    NonFinite { index: usize, loss: f64 },
}

/// Supervised training parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SlConfig {
    pub batch_size: usize,
    pub minibatches_per_round: usize,
    pub lr: f64,
    pub window_w: usize,
    pub hidden: Vec<usize>,
}

impl SlConfig {
    /// Defaults matching the reinforcement side: batch 1024, 100 minibatches
    /// per round, learning rate 3e-4, two hidden layers of 64 units.
    pub fn new(window_w: usize) -> Self {
        Self {
            batch_size: 1 << 10,
            minibatches_per_round: 100,
            lr: 3e-4,
            window_w,
            hidden: vec![64, 64],
        }
    }

    fn validate(&self) {
        assert!(self.batch_size >= 1);
        assert!(self.minibatches_per_round >= 1);
        assert!(self.lr >= 0.0);
        assert!(self.window_w >= 1);
        assert!(!self.hidden.is_empty());
    }
}

/// One supervised example: the raw stacked window ending at `t` (layout
/// identical to the environment's observation flattening) and the raw
/// position delta from `t` to `t + 1` (wrapped for angular coordinates).
pub fn make_sl_example(
    spec: &SystemSpec,
    episode: &Episode,
    t: usize,
    window_w: usize,
) -> (Vec<f64>, Vec<f64>) {
    assert!(t < episode.len(), "example index {t} out of range");
    assert!(window_w >= 1);
    let mut input = Vec::with_capacity(window_w * (spec.state_dim + spec.action_dim));
    for k in 0..window_w {
        let idx = (t + k + 1).saturating_sub(window_w);
        input.extend_from_slice(episode.state(idx));
        input.extend_from_slice(episode.action(idx));
    }
    let target = true_position_delta(spec, episode.state(t), episode.state(t + 1));
    (input, target)
}

fn scale_flat(scaler: &Scaler, flat: &[f64]) -> Vec<f64> {
    let width = scaler.dim();
    assert_eq!(flat.len() % width, 0, "window width mismatch");
    flat.chunks(width).flat_map(|frame| scaler.scale(frame)).collect()
}

/// The supervised agent: policy network, optimizer, and the shared scaling
/// and bounding pipeline.
#[derive(Debug, Clone)]
pub struct SlAgent {
    policy: Mlp,
    opt: Adam,
    scaler: Scaler,
    bounds: Bounds,
    config: SlConfig,
    obs_dim: usize,
}

impl SlAgent {
    pub fn new<R: Rng>(
        obs_dim: usize,
        scaler: Scaler,
        bounds: Bounds,
        config: SlConfig,
        rng: &mut R,
    ) -> Self {
        config.validate();
        let arch = policy_arch(obs_dim, bounds.dim(), &config.hidden);
        let mut policy = Mlp::init(arch, rng);
        policy.scale_output_layer(POLICY_OUTPUT_SCALE);
        let opt = Adam::new(policy.params().len(), config.lr);
        Self { policy, opt, scaler, bounds, config, obs_dim }
    }

    pub fn config(&self) -> &SlConfig {
        &self.config
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn policy(&self) -> &Mlp {
        &self.policy
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    /// Deterministic delta prediction for a stacked observation.
    pub fn predict(&self, obs: &crate::fwdenv::StackedObservation) -> DeltaAction {
        self.predict_encoded(&obs.flatten_scaled(&self.scaler))
    }

    /// Deterministic delta prediction: tanh of the mean head, mapped into
    /// the delta bounds. Identical to the actor's greedy path.
    pub fn predict_encoded(&self, encoded: &[f64]) -> DeltaAction {
        let out = self.policy.forward(encoded);
        let a = self.bounds.dim();
        let unit: Vec<f64> = out[..a].iter().map(|u| u.tanh()).collect();
        DeltaAction::new(unit_to_bound(&self.bounds, &unit))
    }

    /// Scales a raw stacked window into network input.
    pub fn encode_flat(&self, raw_flat: &[f64]) -> Vec<f64> {
        scale_flat(&self.scaler, raw_flat)
    }

    /// One training round: `minibatches_per_round` uniform minibatches of
    /// one-step examples, one gradient step each. Returns the round's mean
    /// MSE in unit-delta space.
    pub fn sl_round<R: Rng>(&mut self, dataset: &Dataset, rng: &mut R) -> Result<f64, SlError> {
        let index = ExampleIndex::new(dataset);
        let mut total = 0.0;
        for _ in 0..self.config.minibatches_per_round {
            let picks: Vec<(usize, usize)> =
                (0..self.config.batch_size).map(|_| index.pick(rng)).collect();
            total += self.minibatch_step(dataset, &picks)?;
        }
        Ok(total / self.config.minibatches_per_round as f64)
    }

    fn minibatch_step(
        &mut self,
        dataset: &Dataset,
        picks: &[(usize, usize)],
    ) -> Result<f64, SlError> {
        let a = self.bounds.dim();
        let spec = &dataset.spec;
        let w = self.config.window_w;
        let scaler = self.scaler.clone();
        let bounds = self.bounds.clone();
        let targets: Vec<Vec<f64>> = picks
            .iter()
            .map(|(e, t)| {
                let (_, delta) = make_sl_example(spec, &dataset.episodes[*e], *t, w);
                bound_to_unit(&bounds, &delta)
            })
            .collect();
        let batch = batch_grad(
            &self.policy,
            picks.len(),
            |i| {
                let (e, t) = picks[i];
                let (raw, _) = make_sl_example(spec, &dataset.episodes[e], t, w);
                scale_flat(&scaler, &raw)
            },
            |i, out| {
                let mut loss = 0.0;
                let mut dout = vec![0.0; out.len()];
                for j in 0..a {
                    let pred = out[j].tanh();
                    let err = pred - targets[i][j];
                    loss += err * err / a as f64;
                    dout[j] = 2.0 * err * (1.0 - pred * pred) / a as f64;
                }
                (loss, dout)
            },
        )
        .map_err(|f| SlError::NonFinite { index: f.index, loss: f.loss })?;
        self.opt.step(self.policy.params_mut(), &batch.grad);
        Ok(batch.mean_loss)
    }

    /// Mean unit-space MSE of the deterministic prediction over every
    /// example in `dataset`. No gradients, no rng.
    pub fn eval_mse(&self, dataset: &Dataset) -> f64 {
        let a = self.bounds.dim();
        let w = self.config.window_w;
        let mut total = 0.0;
        let mut count = 0usize;
        for episode in &dataset.episodes {
            for t in 0..episode.len() {
                let (raw, delta) = make_sl_example(&dataset.spec, episode, t, w);
                let out = self.policy.forward(&scale_flat(&self.scaler, &raw));
                let target = bound_to_unit(&self.bounds, &delta);
                for j in 0..a {
                    let err = out[j].tanh() - target[j];
                    total += err * err / a as f64;
                }
                count += 1;
            }
        }
        total / count as f64
    }

    pub fn to_checkpoint(&self, config_echo: String) -> Checkpoint {
        let (t, m, v) = self.opt.state();
        Checkpoint {
            kind: "sl".to_string(),
            config_echo,
            scaler: self.scaler.clone(),
            delta_low: self.bounds.low().to_vec(),
            delta_high: self.bounds.high().to_vec(),
            networks: vec![("policy".to_string(), self.policy.clone())],
            scalars: Vec::new(),
            adam_states: vec![(
                "opt".to_string(),
                AdamState { lr: self.opt.lr, t, m: m.to_vec(), v: v.to_vec() },
            )],
        }
    }

    pub fn from_checkpoint(cp: &Checkpoint, config: SlConfig) -> Result<Self, CheckpointError> {
        config.validate();
        let missing = |what: &str| CheckpointError::Corrupt(format!("missing section {what}"));
        let policy = cp.network("policy").cloned().ok_or_else(|| missing("policy"))?;
        let s = cp.adam_state("opt").ok_or_else(|| missing("opt"))?;
        let opt = Adam::from_state(s.lr, s.t, s.m.clone(), s.v.clone());
        let obs_dim = policy.arch().input;
        Ok(Self {
            policy,
            opt,
            scaler: cp.scaler.clone(),
            bounds: Bounds::new(cp.delta_low.clone(), cp.delta_high.clone()),
            config,
            obs_dim,
        })
    }
}

/// Uniform sampling over every `(episode, t)` one-step example in a dataset.
struct ExampleIndex {
    cumulative: Vec<usize>,
    total: usize,
}

impl ExampleIndex {
    fn new(dataset: &Dataset) -> Self {
        assert!(!dataset.episodes.is_empty(), "empty dataset");
        let mut cumulative = Vec::with_capacity(dataset.episodes.len());
        let mut total = 0;
        for e in &dataset.episodes {
            total += e.len();
            cumulative.push(total);
        }
        Self { cumulative, total }
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> (usize, usize) {
        let flat = rng.gen_range(0..self.total);
        let e = self.cumulative.partition_point(|c| *c <= flat);
        let before = if e == 0 { 0 } else { self.cumulative[e - 1] };
        (e, flat - before)
    }
}

/// Least-squares oracle: fits `ys ~ xs` (plus intercept) by a direct
/// normal-equations solve and returns the mean squared residual over all
/// output elements. Near-zero pivots are skipped, which leaves the
/// corresponding coefficients at zero instead of failing on collinear
/// feature sets.
pub fn ols_residual_mse(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "feature/target count mismatch");
    assert!(!xs.is_empty(), "empty regression");
    let n = xs.len();
    let d = xs[0].len() + 1;
    let k = ys[0].len();
    let mut xtx = vec![vec![0.0; d]; d];
    let mut xty = vec![vec![0.0; k]; d];
    let mut row = vec![0.0; d];
    for (x, y) in xs.iter().zip(ys) {
        row[..d - 1].copy_from_slice(x);
        row[d - 1] = 1.0;
        for i in 0..d {
            for j in 0..d {
                xtx[i][j] += row[i] * row[j];
            }
            for j in 0..k {
                xty[i][j] += row[i] * y[j];
            }
        }
    }
    let beta = solve_with_pivot_skip(&mut xtx, &mut xty);
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        row[..d - 1].copy_from_slice(x);
        row[d - 1] = 1.0;
        for j in 0..k {
            let pred: f64 = (0..d).map(|i| row[i] * beta[i][j]).sum();
            let err = pred - y[j];
            total += err * err;
        }
    }
    total / (n * k) as f64
}

/// Gaussian elimination with partial pivoting on `[a | b]`; pivots below
/// `1e-10` times the largest diagonal magnitude zero out their row instead
/// of dividing by them.
fn solve_with_pivot_skip(a: &mut [Vec<f64>], b: &mut [Vec<f64>]) -> Vec<Vec<f64>> {
    let d = a.len();
    let k = b[0].len();
    let scale = a
        .iter()
        .enumerate()
        .map(|(i, r)| r[i].abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    for col in 0..d {
        let pivot_row = (col..d)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot_row][col].abs() <= 1e-10 * scale {
            for r in a.iter_mut().skip(col) {
                r[col] = 0.0;
            }
            continue;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let pivot = a[col][col];
        for r in (col + 1)..d {
            let factor = a[r][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..d {
                let upper = a[col][c];
                a[r][c] -= factor * upper;
            }
            for c in 0..k {
                let upper = b[col][c];
                b[r][c] -= factor * upper;
            }
        }
    }
    let mut beta = vec![vec![0.0; k]; d];
    for col in (0..d).rev() {
        if a[col][col] == 0.0 {
            continue;
        }
        for j in 0..k {
            let mut v = b[col][j];
            for c in (col + 1)..d {
                v -= a[col][c] * beta[c][j];
            }
            beta[col][j] = v / a[col][col];
        }
    }
    beta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{generate_dataset, minmax_stats, wrap_angle};
    use crate::fwdenv::{delta_bounds, FwdEnv, FwdEnvConfig, RewardMode, SimilarityChoice};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn msd_dataset(episodes: usize, len: usize, seed: u64) -> Dataset {
        let spec = SystemSpec::msd();
        let mix = vec!["random".to_string(), "sinusoid".to_string()];
        generate_dataset(&spec, &mix, episodes, len, seed).unwrap()
    }

    fn small_agent(dataset: &Dataset, w: usize, seed: u64) -> SlAgent {
        let config = SlConfig {
            batch_size: 64,
            minibatches_per_round: 20,
            lr: 3e-4,
            window_w: w,
            hidden: vec![16, 16],
        };
        let scaler = minmax_stats(dataset);
        let bounds = delta_bounds(dataset);
        let obs_dim = w * (dataset.spec.state_dim + dataset.spec.action_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SlAgent::new(obs_dim, scaler, bounds, config, &mut rng)
    }

    #[test]
    fn constant_episode_yields_zero_targets() {
        let spec = SystemSpec::msd();
        let states = vec![vec![0.0, 0.0]; 6];
        let actions = vec![vec![0.0]; 5];
        let episode = Episode::new(states, actions);
        for t in 0..episode.len() {
            let (_, target) = make_sl_example(&spec, &episode, t, 3);
            assert_eq!(target, vec![0.0]);
        }
    }

    #[test]
    fn msd_targets_equal_the_literal_position_difference() {
        let d = msd_dataset(2, 40, 5);
        for episode in &d.episodes {
            for t in 0..episode.len() {
                let (_, target) = make_sl_example(&d.spec, episode, t, 4);
                let literal = episode.state(t + 1)[0] - episode.state(t)[0];
                assert_eq!(target, vec![literal]);
            }
        }
    }

    #[test]
    fn pendulum_targets_are_wrapped_position_differences() {
        let spec = SystemSpec::pendulum();
        let mix = vec!["bangbang".to_string()];
        let d = generate_dataset(&spec, &mix, 3, 200, 7).unwrap();
        let mut wrap_events = 0;
        for episode in &d.episodes {
            for t in 0..episode.len() {
                let (_, target) = make_sl_example(&spec, episode, t, 4);
                let literal = episode.state(t + 1)[0] - episode.state(t)[0];
                assert_eq!(target[0], wrap_angle(literal));
                if literal.abs() <= std::f64::consts::PI {
                    assert_eq!(target[0], literal);
                } else {
                    wrap_events += 1;
                }
            }
        }
        assert!(wrap_events > 0, "expected at least one boundary crossing");
    }

    #[test]
    fn example_layout_matches_the_environment_stack() {
        let d = msd_dataset(1, 60, 9);
        let config = FwdEnvConfig {
            window_w: 5,
            rollout_h: 4,
            start_offset_max: 12,
            reward_mode: RewardMode::PseudoSparse,
            dt: d.spec.dt,
            similarity_choice: SimilarityChoice::Simplified,
        };
        let mut env = FwdEnv::new(&d, config).unwrap();
        for t in [0, 3, 12] {
            let obs = env.reset_to(0, t);
            let (input, _) = make_sl_example(&d.spec, &d.episodes[0], t, 5);
            assert_eq!(obs.flatten(), input, "offset {t}");
        }
    }

    #[test]
    fn zero_learning_rate_reports_mse_without_moving() {
        let d = msd_dataset(2, 30, 11);
        let mut agent = small_agent(&d, 3, 0);
        agent.config.lr = 0.0;
        agent.opt = Adam::new(agent.policy.params().len(), 0.0);
        let before = agent.policy.params().to_vec();
        let mse = agent.sl_round(&d, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(mse.is_finite() && mse >= 0.0);
        assert_eq!(agent.policy.params(), &before[..]);
    }

    #[test]
    fn rounds_are_deterministic_per_seed() {
        let d = msd_dataset(2, 30, 13);
        let run = || {
            let mut agent = small_agent(&d, 3, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            (0..3).map(|_| agent.sl_round(&d, &mut rng).unwrap()).collect::<Vec<f64>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn training_reduces_held_out_error() {
        let d = msd_dataset(20, 100, 15);
        let split = (d.episodes.len() * 9) / 10;
        let train = Dataset::new(
            d.spec.clone(),
            d.episodes[..split].to_vec(),
            d.provenance[..split].to_vec(),
        );
        let held = Dataset::new(
            d.spec.clone(),
            d.episodes[split..].to_vec(),
            d.provenance[split..].to_vec(),
        );
        let mut agent = small_agent(&train, 4, 4);
        agent.config.batch_size = 256;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let before = agent.eval_mse(&held);
        let mut curve = Vec::new();
        for _ in 0..50 {
            agent.sl_round(&train, &mut rng).unwrap();
            curve.push(agent.eval_mse(&held));
        }
        assert!(curve[49] < before, "held-out MSE should improve");

        let smoothed: Vec<f64> = curve
            .windows(10)
            .map(|w| w.iter().sum::<f64>() / 10.0)
            .collect();
        for pair in smoothed.windows(2) {
            assert!(
                pair[1] <= pair[0] * (1.0 + 1e-9),
                "smoothed held-out MSE must not increase: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn ols_recovers_an_exact_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let ys: Vec<Vec<f64>> =
            xs.iter().map(|x| vec![2.0 * x[0] - 3.0 * x[1] + 0.5 * x[2] + 1.0]).collect();
        let residual = ols_residual_mse(&xs, &ys);
        assert!(residual < 1e-20, "noiseless linear data must fit exactly, got {residual}");
    }

    #[test]
    fn ols_handles_collinear_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let xs: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                let a = rng.gen_range(-1.0..1.0);
                vec![a, 2.0 * a, 1.0]
            })
            .collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![3.0 * x[0]]).collect();
        let residual = ols_residual_mse(&xs, &ys);
        assert!(residual < 1e-18, "collinear but solvable system, got {residual}");
    }

    #[test]
    fn linear_dynamics_are_an_exact_ols_fit() {
        let d = msd_dataset(3, 50, 21);
        let scaler = minmax_stats(&d);
        let bounds = delta_bounds(&d);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for episode in &d.episodes {
            for t in 0..episode.len() {
                let (raw, delta) = make_sl_example(&d.spec, episode, t, 4);
                xs.push(scale_flat(&scaler, &raw));
                ys.push(bound_to_unit(&bounds, &delta));
            }
        }
        let residual = ols_residual_mse(&xs, &ys);
        assert!(residual < 1e-12, "mass-spring-damper deltas are linear, got {residual}");
    }

    #[test]
    fn the_policy_and_actor_share_one_architecture() {
        let d = msd_dataset(2, 40, 23);
        let agent = small_agent(&d, 3, 6);
        let mut sac_config = crate::sac::SacConfig::for_action_dim(agent.bounds().dim());
        sac_config.hidden = agent.config.hidden.clone();
        let rl = crate::sac::SacAgent::new(
            agent.obs_dim(),
            agent.scaler().clone(),
            agent.bounds().clone(),
            sac_config,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(
            crate::approx::arch_fingerprint(agent.policy.arch()),
            crate::approx::arch_fingerprint(rl.actor_arch()),
        );
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let d = msd_dataset(2, 30, 25);
        let mut agent = small_agent(&d, 3, 7);
        agent.sl_round(&d, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let cp = agent.to_checkpoint("sl toy".to_string());
        let restored = SlAgent::from_checkpoint(&cp, agent.config.clone()).unwrap();
        let enc = vec![0.25; agent.obs_dim()];
        assert_eq!(agent.predict_encoded(&enc), restored.predict_encoded(&enc));
        assert_eq!(agent.policy.params(), restored.policy.params());
    }
}
