//! The dataset-replay environment that turns one-step prediction into a
//! sequential decision problem.
//!
//! An agent observes a FIFO window of past `(state, action)` frames and
//! answers with a predicted position increment. The environment integrates
//! that delta into a full predicted state, feeds the prediction back into the
//! window (so errors compound exactly as they would in a bootstrapped
//! rollout), and scores the agent against the logged trajectory: a small
//! per-step penalty while a rollout is open and a trajectory-similarity
//! reward each time `rollout_h` steps complete, at which point the newest
//! frame is re-grounded to the logged state.
//!
//! One instance is single-threaded and owns its episode cursor; any number
//! of instances may share one immutable [`Dataset`] across threads.

use std::collections::VecDeque;

use rand::Rng;

use crate::approx::heads::Bounds;
use crate::dynsys::{wrap_angle, Dataset, Scaler, SystemSpec};
use crate::similarity::{self, Trajectory};

/// Safety factor applied to the largest observed one-step position change
/// when deriving delta action bounds.
pub const DELTA_BOUND_MARGIN: f64 = 1.5;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("no episode is long enough (need more than {needed} transitions)")]
    NoEligibleEpisode { needed: usize },
    #[error("non-finite delta action")]
    NonFiniteAction,
}

/// Reward shaping variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    /// Per-step negative prediction error, plus `1 - z_e` at rollout ends.
    PseudoSparse,
    /// Zero per step; the configured similarity score at rollout ends only.
    FullySparse,
}

impl RewardMode {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "pseudo_sparse" => Some(Self::PseudoSparse),
            "fully_sparse" => Some(Self::FullySparse),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::PseudoSparse => "pseudo_sparse",
            Self::FullySparse => "fully_sparse",
        }
    }
}

/// Which similarity score a fully-sparse rollout end pays out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityChoice {
    /// Mean of bounded time/frequency/power scores.
    Simplified,
    /// `1 - z_e`, matching the pseudo-sparse end-of-rollout term.
    OneMinusZe,
}

impl SimilarityChoice {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "simplified" => Some(Self::Simplified),
            "one_minus_ze" => Some(Self::OneMinusZe),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Simplified => "simplified",
            Self::OneMinusZe => "one_minus_ze",
        }
    }
}

/// Environment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FwdEnvConfig {
    /// Number of stacked past frames in an observation.
    pub window_w: usize,
    /// Steps between teacher re-groundings.
    pub rollout_h: usize,
    /// Episodes start at a uniform offset in `[0, start_offset_max]`.
    pub start_offset_max: usize,
    pub reward_mode: RewardMode,
    /// Seconds per step; must match the dataset for deltas to be consistent.
    pub dt: f64,
    pub similarity_choice: SimilarityChoice,
}

impl FwdEnvConfig {
    /// Defaults mirroring the training setup: `w = 20`, `h = 50`, start
    /// offsets in `[0, 30]`, pseudo-sparse reward, `dt` from the dataset.
    pub fn for_dataset(dataset: &Dataset) -> Self {
        Self {
            window_w: 20,
            rollout_h: 50,
            start_offset_max: 30,
            reward_mode: RewardMode::PseudoSparse,
            dt: dataset.spec.dt,
            similarity_choice: SimilarityChoice::Simplified,
        }
    }

    fn validate(&self) {
        assert!(self.window_w >= 1, "window_w must be at least 1");
        assert!(self.rollout_h >= 1, "rollout_h must be at least 1");
        assert!(self.dt > 0.0, "dt must be positive");
    }
}

/// Splits a state into its position and velocity halves.
pub fn split_state<'a>(spec: &SystemSpec, state: &'a [f64]) -> (&'a [f64], &'a [f64]) {
    assert_eq!(state.len(), spec.state_dim, "state width mismatch");
    state.split_at(spec.pos_dim())
}

/// Integrates a position delta: `qpos' = qpos + delta`, `qvel' = delta / dt`.
///
/// No wrapping happens here; the environment wraps angular positions after
/// integration so the formulas stay exactly as written.
pub fn integrate_delta(qpos: &[f64], delta: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(qpos.len(), delta.len(), "delta width mismatch");
    assert!(dt > 0.0, "dt must be positive");
    let qpos_next = qpos.iter().zip(delta).map(|(q, d)| q + d).collect();
    let qvel_next = delta.iter().map(|d| d / dt).collect();
    (qpos_next, qvel_next)
}

/// The position increment that maps `state_t`'s positions onto
/// `state_t1`'s, using the shortest wrapped step for angular coordinates.
pub fn true_position_delta(spec: &SystemSpec, state_t: &[f64], state_t1: &[f64]) -> Vec<f64> {
    let (q0, _) = split_state(spec, state_t);
    let (q1, _) = split_state(spec, state_t1);
    let angular = spec.angular_pos();
    q0.iter()
        .zip(q1)
        .zip(&angular)
        .map(|((a, b), ang)| {
            let diff = b - a;
            if *ang {
                wrap_angle(diff)
            } else {
                diff
            }
        })
        .collect()
}

/// Delta action bounds derived from the data: per position dimension,
/// ±[`DELTA_BOUND_MARGIN`] times the largest observed one-step change.
pub fn delta_bounds(dataset: &Dataset) -> Bounds {
    let spec = &dataset.spec;
    let mut max_abs = vec![0.0f64; spec.pos_dim()];
    for e in &dataset.episodes {
        for t in 0..e.len() {
            let d = true_position_delta(spec, e.state(t), e.state(t + 1));
            for (slot, v) in max_abs.iter_mut().zip(&d) {
                *slot = slot.max(v.abs());
            }
        }
    }
    let high: Vec<f64> = max_abs
        .iter()
        .map(|m| if *m > 0.0 { m * DELTA_BOUND_MARGIN } else { 1e-6 })
        .collect();
    let low = high.iter().map(|h| -h).collect();
    Bounds::new(low, high)
}

/// A predicted position increment.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaAction {
    pub delta: Vec<f64>,
}

impl DeltaAction {
    pub fn new(delta: Vec<f64>) -> Self {
        Self { delta }
    }
}

/// FIFO window of the last `window_w` frames, each a `(state, action)` pair,
/// newest last.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedObservation {
    frames: VecDeque<(Vec<f64>, Vec<f64>)>,
    capacity: usize,
}

impl StackedObservation {
    fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        Self { frames: VecDeque::with_capacity(capacity), capacity }
    }

    fn push(&mut self, state: Vec<f64>, action: Vec<f64>) {
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back((state, action));
    }

    fn replace_newest_state(&mut self, state: Vec<f64>) {
        let newest = self.frames.back_mut().expect("stack never empty after reset");
        newest.0 = state;
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// The state in the most recent frame (the rollout's current state).
    pub fn newest_state(&self) -> &[f64] {
        &self.frames.back().expect("stack never empty after reset").0
    }

    pub fn frame(&self, i: usize) -> (&[f64], &[f64]) {
        let (s, a) = &self.frames[i];
        (s, a)
    }

    /// Flattens oldest-to-newest into one vector of length
    /// `window_w * (state_dim + action_dim)`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (s, a) in &self.frames {
            out.extend_from_slice(s);
            out.extend_from_slice(a);
        }
        out
    }

    /// Like [`StackedObservation::flatten`], but min-max scales every frame.
    pub fn flatten_scaled(&self, scaler: &Scaler) -> Vec<f64> {
        let mut out = Vec::new();
        let mut frame = Vec::new();
        for (s, a) in &self.frames {
            frame.clear();
            frame.extend_from_slice(s);
            frame.extend_from_slice(a);
            out.extend_from_slice(&scaler.scale(&frame));
        }
        out
    }
}

/// Cursor and buffers for the episode currently being replayed.
#[derive(Debug, Clone)]
pub struct RolloutState {
    pub episode_index: usize,
    pub start_offset: usize,
    /// Steps taken since reset.
    pub step_counter: usize,
    /// Steps taken since the last teacher re-grounding, in `0..rollout_h`.
    pub rollout_step_counter: usize,
    /// Predicted state per step, aligned with `true_traj`.
    pub predicted_traj: Vec<Vec<f64>>,
    pub true_traj: Vec<Vec<f64>>,
    pub obs: StackedObservation,
    terminal: bool,
}

/// What one environment step returns.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: StackedObservation,
    pub reward: f64,
    pub terminal: bool,
    pub rollout_terminal: bool,
}

/// Reward for the current step.
///
/// At rollout ends the full `rollout_h`-step segments are compared
/// (`1 - z_e` in pseudo-sparse mode, the configured similarity score in
/// fully-sparse mode). At ordinary steps only the segments' last entries
/// matter: minus their Euclidean distance in pseudo-sparse mode, zero in
/// fully-sparse mode.
pub fn reward_fn(
    predicted_seg: &[Vec<f64>],
    true_seg: &[Vec<f64>],
    rollout_terminal: bool,
    config: &FwdEnvConfig,
) -> f64 {
    assert_eq!(predicted_seg.len(), true_seg.len(), "segment length mismatch");
    assert!(!predicted_seg.is_empty(), "empty reward segment");
    if rollout_terminal {
        let pred = Trajectory::from_states(predicted_seg);
        let truth = Trajectory::from_states(true_seg);
        match config.reward_mode {
            RewardMode::PseudoSparse => 1.0 - similarity::z_e(&truth, &pred),
            RewardMode::FullySparse => match config.similarity_choice {
                SimilarityChoice::Simplified => similarity::simplified_similarity(&truth, &pred),
                SimilarityChoice::OneMinusZe => 1.0 - similarity::z_e(&truth, &pred),
            },
        }
    } else {
        match config.reward_mode {
            RewardMode::PseudoSparse => {
                let p = predicted_seg.last().unwrap();
                let t = true_seg.last().unwrap();
                -similarity::euclidean_distance(t, p)
            }
            RewardMode::FullySparse => 0.0,
        }
    }
}

/// The replay environment. Borrows an immutable dataset; owns its cursor.
#[derive(Debug)]
pub struct FwdEnv<'d> {
    dataset: &'d Dataset,
    config: FwdEnvConfig,
    eligible: Vec<usize>,
    rollout: Option<RolloutState>,
}

impl<'d> FwdEnv<'d> {
    /// Builds an environment over `dataset`, keeping only episodes long
    /// enough to host the maximum start offset plus one full rollout.
    pub fn new(dataset: &'d Dataset, config: FwdEnvConfig) -> Result<Self, EnvError> {
        config.validate();
        let needed = config.start_offset_max + config.rollout_h;
        let eligible: Vec<usize> = dataset
            .episodes
            .iter()
            .enumerate()
            .filter(|(_, e)| e.len() > needed)
            .map(|(i, _)| i)
            .collect();
        if eligible.is_empty() {
            return Err(EnvError::NoEligibleEpisode { needed });
        }
        Ok(Self { dataset, config, eligible, rollout: None })
    }

    pub fn config(&self) -> &FwdEnvConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn rollout_state(&self) -> Option<&RolloutState> {
        self.rollout.as_ref()
    }

    /// Index into the episode's states of the newest stacked frame.
    pub fn absolute_index(&self) -> usize {
        let rs = self.rollout.as_ref().expect("reset first");
        rs.start_offset + rs.step_counter
    }

    /// Starts a fresh rollout: picks an eligible episode and a start offset
    /// uniformly, primes the stack with the frames at and before the start
    /// (repeating the earliest frame when fewer than `window_w` exist), and
    /// zeroes all counters.
    pub fn reset<R: Rng>(&mut self, rng: &mut R) -> StackedObservation {
        let episode_index = self.eligible[rng.gen_range(0..self.eligible.len())];
        let start_offset = rng.gen_range(0..=self.config.start_offset_max);
        self.reset_to(episode_index, start_offset)
    }

    /// Deterministic variant of [`FwdEnv::reset`] used by evaluation: replay
    /// episode `episode_index` starting at `start_offset`.
    pub fn reset_to(&mut self, episode_index: usize, start_offset: usize) -> StackedObservation {
        let episode = &self.dataset.episodes[episode_index];
        assert!(
            episode.len() > start_offset + self.config.rollout_h,
            "episode {episode_index} too short for offset {start_offset}"
        );
        let w = self.config.window_w;
        let mut obs = StackedObservation::new(w);
        for k in 0..w {
            // Window positions start_offset - w + 1 ..= start_offset,
            // clamped below at frame 0.
            let idx = (start_offset + k + 1).saturating_sub(w);
            obs.push(episode.state(idx).to_vec(), episode.action(idx).to_vec());
        }
        self.rollout = Some(RolloutState {
            episode_index,
            start_offset,
            step_counter: 0,
            rollout_step_counter: 0,
            predicted_traj: Vec::new(),
            true_traj: Vec::new(),
            obs,
            terminal: false,
        });
        self.rollout.as_ref().unwrap().obs.clone()
    }

    /// Advances one step with the agent's predicted position delta.
    pub fn step(&mut self, action: &DeltaAction) -> Result<StepOutcome, EnvError> {
        if !action.delta.iter().all(|v| v.is_finite()) {
            return Err(EnvError::NonFiniteAction);
        }
        let spec = &self.dataset.spec;
        assert_eq!(action.delta.len(), spec.pos_dim(), "delta width mismatch");
        let episode = &self.dataset.episodes[self
            .rollout
            .as_ref()
            .expect("step called before reset")
            .episode_index];
        let rs = self.rollout.as_mut().expect("step called before reset");
        assert!(!rs.terminal, "step called on a terminated episode");

        rs.step_counter += 1;
        rs.rollout_step_counter += 1;
        let t_abs = rs.start_offset + rs.step_counter;

        let prev_state = rs.obs.newest_state();
        let (qpos_prev, _) = split_state(spec, prev_state);
        let (mut qpos_next, qvel_next) = integrate_delta(qpos_prev, &action.delta, self.config.dt);
        for (q, ang) in qpos_next.iter_mut().zip(spec.angular_pos()) {
            if ang {
                *q = wrap_angle(*q);
            }
        }
        let mut predicted: Vec<f64> = qpos_next;
        predicted.extend_from_slice(&qvel_next);

        let true_state = episode.state(t_abs).to_vec();
        rs.predicted_traj.push(predicted.clone());
        rs.true_traj.push(true_state.clone());

        let rollout_terminal = rs.rollout_step_counter == self.config.rollout_h;
        let terminal = rs.step_counter == episode.len() - rs.start_offset;

        let next_action_idx = t_abs.min(episode.len() - 1);
        rs.obs.push(predicted, episode.action(next_action_idx).to_vec());

        let seg_len = if rollout_terminal { self.config.rollout_h } else { 1 };
        let n = rs.predicted_traj.len();
        let reward = reward_fn(
            &rs.predicted_traj[n - seg_len..],
            &rs.true_traj[n - seg_len..],
            rollout_terminal,
            &self.config,
        );

        if rollout_terminal {
            rs.obs.replace_newest_state(true_state);
            rs.rollout_step_counter = 0;
        }
        rs.terminal = terminal;

        Ok(StepOutcome { obs: rs.obs.clone(), reward, terminal, rollout_terminal })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{generate_dataset, SystemSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset(system: &str, episodes: usize, len: usize, seed: u64) -> Dataset {
        let spec = SystemSpec::by_name(system).unwrap();
        let mix = vec!["random".to_string(), "sinusoid".to_string()];
        generate_dataset(&spec, &mix, episodes, len, seed).unwrap()
    }

    fn small_config(dataset: &Dataset, w: usize, h: usize, offset: usize) -> FwdEnvConfig {
        FwdEnvConfig {
            window_w: w,
            rollout_h: h,
            start_offset_max: offset,
            reward_mode: RewardMode::PseudoSparse,
            dt: dataset.spec.dt,
            similarity_choice: SimilarityChoice::Simplified,
        }
    }

    #[test]
    fn split_state_round_trips() {
        let spec = SystemSpec::pendulum();
        let state = [0.3, -1.1];
        let (q, v) = split_state(&spec, &state);
        assert_eq!(q, &[0.3]);
        assert_eq!(v, &[-1.1]);
        let joined: Vec<f64> = q.iter().chain(v).cloned().collect();
        assert_eq!(joined, state);
        let spec = SystemSpec::msd();
        let (q, v) = split_state(&spec, &[2.0, 0.0]);
        assert_eq!((q, v), (&[2.0][..], &[0.0][..]));
    }

    #[test]
    fn integrate_delta_hand_examples() {
        let (q, v) = integrate_delta(&[1.0], &[0.0], 0.008);
        assert_eq!((q, v), (vec![1.0], vec![0.0]));
        let (q, v) = integrate_delta(&[0.5], &[0.004], 0.008);
        assert!((q[0] - 0.504).abs() < 1e-15);
        assert!((v[0] - 0.5).abs() < 1e-15);
        let (_, v) = integrate_delta(&[0.0], &[0.02], 0.05);
        assert!((v[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_offset_always_starts_at_zero() {
        let d = dataset("msd", 3, 60, 1);
        let mut env = FwdEnv::new(&d, small_config(&d, 4, 10, 0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            env.reset(&mut rng);
            assert_eq!(env.rollout_state().unwrap().start_offset, 0);
        }
    }

    #[test]
    fn start_offsets_span_the_configured_range() {
        let d = dataset("pendulum", 2, 120, 3);
        let mut env = FwdEnv::new(&d, small_config(&d, 4, 10, 30)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..2000 {
            env.reset(&mut rng);
            seen.insert(env.rollout_state().unwrap().start_offset);
        }
        assert_eq!(seen.len(), 31, "expected every offset in [0, 30]");
    }

    #[test]
    fn stack_priming_repeats_the_earliest_frame() {
        let d = dataset("msd", 1, 60, 9);
        let mut env = FwdEnv::new(&d, small_config(&d, 20, 10, 3)).unwrap();
        let obs = env.reset_to(0, 3);
        assert_eq!(obs.len(), 20);
        let e = &d.episodes[0];
        for k in 0..17 {
            assert_eq!(obs.frame(k), (e.state(0), e.action(0)), "frame {k}");
        }
        for (k, idx) in (17..20).zip(1..=3) {
            assert_eq!(obs.frame(k), (e.state(idx), e.action(idx)), "frame {k}");
        }
    }

    #[test]
    fn stack_size_is_constant_after_reset_and_steps() {
        let d = dataset("pendulum", 1, 80, 2);
        let mut env = FwdEnv::new(&d, small_config(&d, 7, 5, 2)).unwrap();
        let obs = env.reset_to(0, 1);
        assert_eq!(obs.len(), 7);
        for _ in 0..30 {
            let out = env.step(&DeltaAction::new(vec![0.001])).unwrap();
            assert_eq!(out.obs.len(), 7);
            if out.terminal {
                break;
            }
        }
    }

    fn true_delta_of(env: &FwdEnv, t_abs: usize) -> DeltaAction {
        let e = &env.dataset().episodes[env.rollout_state().unwrap().episode_index];
        DeltaAction::new(true_position_delta(
            &env.dataset().spec,
            e.state(t_abs),
            e.state(t_abs + 1),
        ))
    }

    #[test]
    fn scripted_true_delta_tracks_the_logged_trajectory() {
        for system in ["pendulum", "msd"] {
            let d = dataset(system, 2, 150, 11);
            let mut env = FwdEnv::new(&d, small_config(&d, 10, 50, 0)).unwrap();
            env.reset_to(0, 0);
            loop {
                let t = env.absolute_index();
                let action = true_delta_of(&env, t);
                let out = env.step(&action).unwrap();
                let rs = env.rollout_state().unwrap();
                let pred = rs.predicted_traj.last().unwrap();
                let truth = rs.true_traj.last().unwrap();
                let err = similarity::euclidean_distance(pred, truth);
                assert!(err <= 1e-9, "{system}: drift {err} at step {}", rs.step_counter);
                if !out.rollout_terminal {
                    if env.config().reward_mode == RewardMode::PseudoSparse {
                        assert!(out.reward.abs() <= 1e-9);
                    }
                }
                if out.terminal {
                    break;
                }
            }
        }
    }

    #[test]
    fn rollout_terminal_cadence_matches_floor_division() {
        let d = dataset("msd", 1, 120, 21);
        let mut env = FwdEnv::new(&d, small_config(&d, 5, 50, 0)).unwrap();
        env.reset_to(0, 0);
        let mut fired_at = Vec::new();
        let mut steps = 0;
        loop {
            let out = env.step(&DeltaAction::new(vec![0.0])).unwrap();
            steps += 1;
            if out.rollout_terminal {
                fired_at.push(steps);
            }
            if out.terminal {
                break;
            }
        }
        assert_eq!(steps, 120);
        assert_eq!(fired_at, vec![50, 100], "expected floor(120/50) = 2 boundary resets");
    }

    #[test]
    fn unit_rollout_h_regrounds_every_step() {
        let d = dataset("msd", 1, 30, 4);
        let mut env = FwdEnv::new(&d, small_config(&d, 3, 1, 0)).unwrap();
        env.reset_to(0, 0);
        for _ in 0..30 {
            let out = env.step(&DeltaAction::new(vec![0.0])).unwrap();
            assert!(out.rollout_terminal, "h = 1 must re-ground at every step");
            if out.terminal {
                break;
            }
        }
    }

    #[test]
    fn regrounding_replaces_only_the_newest_state() {
        let d = dataset("msd", 1, 40, 6);
        let mut env = FwdEnv::new(&d, small_config(&d, 4, 2, 0)).unwrap();
        env.reset_to(0, 0);
        let bogus = DeltaAction::new(vec![0.3]);
        env.step(&bogus).unwrap();
        let out = env.step(&bogus).unwrap();
        assert!(out.rollout_terminal);
        let e = &d.episodes[0];
        // Newest frame re-grounded to the logged state at index 2.
        assert_eq!(out.obs.frame(3).0, e.state(2));
        // The previous frame keeps its (wrong) prediction.
        let rs = env.rollout_state().unwrap();
        assert_eq!(out.obs.frame(2).0, rs.predicted_traj[0].as_slice());
        assert_ne!(out.obs.frame(2).0, e.state(1));
    }

    #[test]
    fn terminal_fires_exactly_at_the_remaining_length() {
        let d = dataset("pendulum", 1, 75, 8);
        let mut env = FwdEnv::new(&d, small_config(&d, 4, 10, 5)).unwrap();
        env.reset_to(0, 5);
        let mut terminals = 0;
        for step in 1..=70 {
            let out = env.step(&DeltaAction::new(vec![0.0])).unwrap();
            if out.terminal {
                terminals += 1;
                assert_eq!(step, 70, "terminal must fire at episode end only");
            }
        }
        assert_eq!(terminals, 1);
    }

    #[test]
    #[should_panic(expected = "terminated")]
    fn stepping_after_terminal_is_a_contract_violation() {
        let d = dataset("msd", 1, 15, 8);
        let mut env = FwdEnv::new(&d, small_config(&d, 3, 5, 0)).unwrap();
        env.reset_to(0, 0);
        for _ in 0..15 {
            env.step(&DeltaAction::new(vec![0.0])).unwrap();
        }
        let _ = env.step(&DeltaAction::new(vec![0.0]));
    }

    #[test]
    fn non_finite_actions_are_faults() {
        let d = dataset("msd", 1, 20, 8);
        let mut env = FwdEnv::new(&d, small_config(&d, 3, 5, 0)).unwrap();
        env.reset_to(0, 0);
        assert!(matches!(
            env.step(&DeltaAction::new(vec![f64::NAN])),
            Err(EnvError::NonFiniteAction)
        ));
    }

    #[test]
    fn too_short_episodes_cannot_host_an_environment() {
        let d = dataset("msd", 2, 12, 3);
        let err = FwdEnv::new(&d, small_config(&d, 3, 20, 0)).unwrap_err();
        assert!(matches!(err, EnvError::NoEligibleEpisode { needed: 20 }));
    }

    #[test]
    fn reward_fn_hand_cases() {
        let d = dataset("msd", 1, 20, 3);
        let mut config = small_config(&d, 3, 5, 0);
        let seg = vec![vec![1.0, 0.0], vec![0.5, 0.5]];

        assert_eq!(reward_fn(&seg, &seg, true, &config), 0.0);
        let pred = vec![vec![0.0, 0.0]];
        let truth = vec![vec![1.0, 0.0]];
        assert_eq!(reward_fn(&pred, &truth, false, &config), -1.0);

        config.reward_mode = RewardMode::FullySparse;
        assert_eq!(reward_fn(&pred, &truth, false, &config), 0.0);
        let score = reward_fn(&pred, &truth, true, &config);
        assert!((0.0..=1.0).contains(&score));
        config.similarity_choice = SimilarityChoice::OneMinusZe;
        assert_eq!(reward_fn(&seg, &seg, true, &config), 0.0);
    }

    #[test]
    fn delta_bounds_cover_every_observed_step() {
        for system in ["pendulum", "msd"] {
            let d = dataset(system, 4, 100, 17);
            let bounds = delta_bounds(&d);
            assert_eq!(bounds.dim(), d.spec.pos_dim());
            for e in &d.episodes {
                for t in 0..e.len() {
                    let delta = true_position_delta(&d.spec, e.state(t), e.state(t + 1));
                    for (v, (lo, hi)) in delta.iter().zip(bounds.low().iter().zip(bounds.high())) {
                        assert!(v >= lo && v <= hi);
                    }
                }
            }
            for (lo, hi) in bounds.low().iter().zip(bounds.high()) {
                assert_eq!(-lo, *hi, "bounds are symmetric");
            }
        }
    }

    #[test]
    fn wrapped_positions_stay_in_range_under_wild_deltas() {
        let d = dataset("pendulum", 1, 60, 19);
        let bounds = delta_bounds(&d);
        let mut env = FwdEnv::new(&d, small_config(&d, 5, 10, 0)).unwrap();
        env.reset_to(0, 0);
        let big = bounds.high()[0];
        for _ in 0..60 {
            let out = env.step(&DeltaAction::new(vec![big])).unwrap();
            let theta = out.obs.newest_state()[0];
            assert!(theta > -std::f64::consts::PI && theta <= std::f64::consts::PI);
            if out.terminal {
                break;
            }
        }
    }
}
