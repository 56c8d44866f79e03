//! Run orchestration: configuration, the training loops, rollout
//! evaluation, and reporting. Everything the command-line tool does lives
//! here so it can be driven and tested as a library.
//!
//! A run is described by a [`RunConfig`] parsed from `key=value` text.
//! Training writes an append-only metrics CSV (one flushed row per round),
//! checkpoints on a fixed cadence, and a final model. All randomness flows
//! from the run seed through numbered ChaCha streams (one pair per round:
//! collection and updates), so identical configurations reproduce identical
//! artifacts byte for byte when timing capture is disabled.

pub mod metrics;
pub mod report;
pub mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynsys::io::{load_dataset, save_dataset};
use crate::dynsys::{generate_dataset, minmax_stats, Dataset, SystemSpec};
use crate::fwdenv::{
    delta_bounds, true_position_delta, DeltaAction, EnvError, FwdEnv, FwdEnvConfig, RewardMode,
    SimilarityChoice,
};
use crate::par;
use crate::sac::{ReplayBuffer, SacAgent, SacConfig, Transition, UpdateOutcome};
use crate::similarity::{rmse_rollout_metric, Trajectory};
use crate::sltrain::{SlAgent, SlConfig};
use metrics::{MetricsRecord, MetricsWriter};

/// Run failures, grouped by the process exit code they map to.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training fault: {0}")]
    Training(String),
}

impl HarnessError {
    /// 2 for configuration errors, 3 for data errors, 4 for training faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Training(_) => 4,
        }
    }
}

impl From<crate::dynsys::io::DataError> for HarnessError {
    fn from(e: crate::dynsys::io::DataError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<metrics::MetricsError> for HarnessError {
    fn from(e: metrics::MetricsError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<crate::approx::checkpoint::CheckpointError> for HarnessError {
    fn from(e: crate::approx::checkpoint::CheckpointError) -> Self {
        Self::Data(e.to_string())
    }
}

fn env_fault(e: EnvError) -> HarnessError {
    match e {
        EnvError::NoEligibleEpisode { .. } => HarnessError::Data(e.to_string()),
        EnvError::NonFiniteAction => HarnessError::Training(e.to_string()),
    }
}

/// Everything a run needs, resolved to concrete values.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: String,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub episodes: usize,
    pub eval_every: usize,
    pub checkpoint_every: usize,
    pub collect_max_steps: usize,
    /// Leave `wall_ms` empty so repeated runs produce identical bytes.
    pub deterministic_timing: bool,
    pub window_w: usize,
    pub rollout_h: usize,
    pub start_offset_max: usize,
    pub reward_mode: RewardMode,
    pub similarity: SimilarityChoice,
    /// Seconds per step; defaults to the dataset's value.
    pub dt: Option<f64>,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub n_quantiles: usize,
    pub gamma: f64,
    pub tau_soft: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_alpha: f64,
    /// Defaults to minus the action dimension.
    pub target_entropy: Option<f64>,
    pub updates_per_episode: usize,
    pub buffer_capacity: usize,
    pub minibatches_per_round: usize,
    pub lr: f64,
    pub gen_episodes: usize,
    pub gen_max_len: usize,
    pub behavior_mix: Vec<String>,
    /// Evaluation rollouts per metrics row during training.
    pub eval_rollouts: usize,
    /// Re-grounding horizons for the rollout sweep.
    pub eval_lengths: Vec<usize>,
    /// Episodes evaluated per horizon in the rollout sweep.
    pub eval_episodes: usize,
    /// Trajectory overlays emitted by the rollout sweep.
    pub overlay_episodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: "pendulum".to_string(),
            dataset: PathBuf::from("dataset.fwdb"),
            out: PathBuf::from("out"),
            seed: 0,
            episodes: 300,
            eval_every: 10,
            checkpoint_every: 100,
            collect_max_steps: 10_000,
            deterministic_timing: false,
            window_w: 20,
            rollout_h: 50,
            start_offset_max: 30,
            reward_mode: RewardMode::PseudoSparse,
            similarity: SimilarityChoice::Simplified,
            dt: None,
            hidden: vec![64, 64],
            batch_size: 1 << 10,
            n_quantiles: 64,
            gamma: 0.99,
            tau_soft: 0.005,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_alpha: 3e-4,
            target_entropy: None,
            updates_per_episode: 10,
            buffer_capacity: 1_000_000,
            minibatches_per_round: 100,
            lr: 3e-4,
            gen_episodes: 100,
            gen_max_len: 500,
            behavior_mix: vec!["random".to_string(), "sinusoid".to_string()],
            eval_rollouts: 3,
            eval_lengths: vec![50, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000],
            eval_episodes: 10,
            overlay_episodes: 1,
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "system",
    "dataset",
    "out",
    "seed",
    "episodes",
    "eval_every",
    "checkpoint_every",
    "collect_max_steps",
    "deterministic_timing",
    "window_w",
    "rollout_h",
    "start_offset_max",
    "reward_mode",
    "similarity",
    "dt",
    "hidden",
    "batch_size",
    "n_quantiles",
    "gamma",
    "tau_soft",
    "lr_actor",
    "lr_critic",
    "lr_alpha",
    "target_entropy",
    "updates_per_episode",
    "buffer_capacity",
    "minibatches_per_round",
    "lr",
    "gen_episodes",
    "gen_max_len",
    "behavior_mix",
    "eval_rollouts",
    "eval_lengths",
    "eval_episodes",
    "overlay_episodes",
];

fn bad(key: &str, value: &str, what: &str) -> HarnessError {
    HarnessError::Config(format!("key {key}: cannot parse {value:?} as {what}"))
}

impl RunConfig {
    /// Parses `key=value` lines. Blank lines and `#` comments are ignored;
    /// unknown and duplicated keys are errors.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected key=value, got {line:?}", i + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if map.insert(key.clone(), value).is_some() {
                return Err(HarnessError::Config(format!("duplicate key {key}")));
            }
        }
        Self::from_map(map)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies one `key=value` override on top of an existing config.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let mut map = BTreeMap::new();
        map.insert(key.to_string(), value.to_string());
        self.absorb(map)
    }

    fn from_map(map: BTreeMap<String, String>) -> Result<Self, HarnessError> {
        let mut config = Self::default();
        config.absorb(map)?;
        Ok(config)
    }

    fn absorb(&mut self, map: BTreeMap<String, String>) -> Result<(), HarnessError> {
        for (key, value) in map {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(HarnessError::Config(format!("unknown key {key}")));
            }
            let v = value.as_str();
            let usize_of =
                |what: &str| v.parse::<usize>().map_err(|_| bad(what, v, "a count"));
            let f64_of = |what: &str| v.parse::<f64>().map_err(|_| bad(what, v, "a number"));
            match key.as_str() {
                "system" => {
                    SystemKindCheck::check(v)?;
                    self.system = v.to_string();
                }
                "dataset" => self.dataset = PathBuf::from(v),
                "out" => self.out = PathBuf::from(v),
                "seed" => self.seed = v.parse().map_err(|_| bad("seed", v, "an integer"))?,
                "episodes" => self.episodes = usize_of("episodes")?,
                "eval_every" => self.eval_every = usize_of("eval_every")?,
                "checkpoint_every" => self.checkpoint_every = usize_of("checkpoint_every")?,
                "collect_max_steps" => self.collect_max_steps = usize_of("collect_max_steps")?,
                "deterministic_timing" => {
                    self.deterministic_timing = match v {
                        "true" => true,
                        "false" => false,
                        _ => return Err(bad("deterministic_timing", v, "true or false")),
                    }
                }
                "window_w" => self.window_w = usize_of("window_w")?,
                "rollout_h" => self.rollout_h = usize_of("rollout_h")?,
                "start_offset_max" => self.start_offset_max = usize_of("start_offset_max")?,
                "reward_mode" => {
                    self.reward_mode = RewardMode::parse(v)
                        .ok_or_else(|| bad("reward_mode", v, "pseudo_sparse or fully_sparse"))?
                }
                "similarity" => {
                    self.similarity = SimilarityChoice::parse(v)
                        .ok_or_else(|| bad("similarity", v, "simplified or one_minus_ze"))?
                }
                "dt" => self.dt = Some(f64_of("dt")?),
                "hidden" => {
                    self.hidden = v
                        .split(',')
                        .map(|p| p.trim().parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| bad("hidden", v, "a comma list of widths"))?
                }
                "batch_size" => self.batch_size = usize_of("batch_size")?,
                "n_quantiles" => self.n_quantiles = usize_of("n_quantiles")?,
                "gamma" => self.gamma = f64_of("gamma")?,
                "tau_soft" => self.tau_soft = f64_of("tau_soft")?,
                "lr_actor" => self.lr_actor = f64_of("lr_actor")?,
                "lr_critic" => self.lr_critic = f64_of("lr_critic")?,
                "lr_alpha" => self.lr_alpha = f64_of("lr_alpha")?,
                "target_entropy" => self.target_entropy = Some(f64_of("target_entropy")?),
                "updates_per_episode" => self.updates_per_episode = usize_of("updates_per_episode")?,
                "buffer_capacity" => self.buffer_capacity = usize_of("buffer_capacity")?,
                "minibatches_per_round" => {
                    self.minibatches_per_round = usize_of("minibatches_per_round")?
                }
                "lr" => self.lr = f64_of("lr")?,
                "gen_episodes" => self.gen_episodes = usize_of("gen_episodes")?,
                "gen_max_len" => self.gen_max_len = usize_of("gen_max_len")?,
                "behavior_mix" => {
                    self.behavior_mix = v.split(',').map(|p| p.trim().to_string()).collect()
                }
                "eval_rollouts" => self.eval_rollouts = usize_of("eval_rollouts")?,
                "eval_lengths" => {
                    self.eval_lengths = v
                        .split(',')
                        .map(|p| p.trim().parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| bad("eval_lengths", v, "a comma list of horizons"))?
                }
                "eval_episodes" => self.eval_episodes = usize_of("eval_episodes")?,
                "overlay_episodes" => self.overlay_episodes = usize_of("overlay_episodes")?,
                _ => unreachable!("key set already checked"),
            }
        }
        self.validate()
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let positive: [(&str, usize); 12] = [
            ("episodes", self.episodes),
            ("eval_every", self.eval_every),
            ("checkpoint_every", self.checkpoint_every),
            ("collect_max_steps", self.collect_max_steps),
            ("window_w", self.window_w),
            ("rollout_h", self.rollout_h),
            ("batch_size", self.batch_size),
            ("n_quantiles", self.n_quantiles),
            ("updates_per_episode", self.updates_per_episode),
            ("buffer_capacity", self.buffer_capacity),
            ("minibatches_per_round", self.minibatches_per_round),
            ("gen_episodes", self.gen_episodes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(HarnessError::Config(format!("{name} must be positive")));
            }
        }
        if self.hidden.is_empty() {
            return Err(HarnessError::Config("hidden must name at least one layer".into()));
        }
        if self.eval_lengths.is_empty() {
            return Err(HarnessError::Config("eval_lengths must not be empty".into()));
        }
        Ok(())
    }

    /// Canonical `key=value` text of every resolved field, sorted by key.
    /// Parsing it back yields an identical config.
    pub fn echo(&self) -> String {
        let mut pairs: Vec<(String, String)> = vec![
            ("system".into(), self.system.clone()),
            ("dataset".into(), self.dataset.display().to_string()),
            ("out".into(), self.out.display().to_string()),
            ("seed".into(), self.seed.to_string()),
            ("episodes".into(), self.episodes.to_string()),
            ("eval_every".into(), self.eval_every.to_string()),
            ("checkpoint_every".into(), self.checkpoint_every.to_string()),
            ("collect_max_steps".into(), self.collect_max_steps.to_string()),
            ("deterministic_timing".into(), self.deterministic_timing.to_string()),
            ("window_w".into(), self.window_w.to_string()),
            ("rollout_h".into(), self.rollout_h.to_string()),
            ("start_offset_max".into(), self.start_offset_max.to_string()),
            ("reward_mode".into(), self.reward_mode.name().to_string()),
            ("similarity".into(), self.similarity.name().to_string()),
            ("hidden".into(), join(&self.hidden)),
            ("batch_size".into(), self.batch_size.to_string()),
            ("n_quantiles".into(), self.n_quantiles.to_string()),
            ("gamma".into(), self.gamma.to_string()),
            ("tau_soft".into(), self.tau_soft.to_string()),
            ("lr_actor".into(), self.lr_actor.to_string()),
            ("lr_critic".into(), self.lr_critic.to_string()),
            ("lr_alpha".into(), self.lr_alpha.to_string()),
            ("updates_per_episode".into(), self.updates_per_episode.to_string()),
            ("buffer_capacity".into(), self.buffer_capacity.to_string()),
            ("minibatches_per_round".into(), self.minibatches_per_round.to_string()),
            ("lr".into(), self.lr.to_string()),
            ("gen_episodes".into(), self.gen_episodes.to_string()),
            ("gen_max_len".into(), self.gen_max_len.to_string()),
            ("behavior_mix".into(), self.behavior_mix.join(",")),
            ("eval_rollouts".into(), self.eval_rollouts.to_string()),
            ("eval_lengths".into(), join(&self.eval_lengths)),
            ("eval_episodes".into(), self.eval_episodes.to_string()),
            ("overlay_episodes".into(), self.overlay_episodes.to_string()),
        ];
        if let Some(dt) = self.dt {
            pairs.push(("dt".into(), dt.to_string()));
        }
        if let Some(te) = self.target_entropy {
            pairs.push(("target_entropy".into(), te.to_string()));
        }
        pairs.sort();
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn env_config(&self, dataset_dt: f64) -> FwdEnvConfig {
        FwdEnvConfig {
            window_w: self.window_w,
            rollout_h: self.rollout_h,
            start_offset_max: self.start_offset_max,
            reward_mode: self.reward_mode,
            dt: self.dt.unwrap_or(dataset_dt),
            similarity_choice: self.similarity,
        }
    }

    pub fn sac_config(&self, action_dim: usize) -> SacConfig {
        SacConfig {
            batch_size: self.batch_size,
            n_quantiles: self.n_quantiles,
            gamma: self.gamma,
            tau_soft: self.tau_soft,
            lr_actor: self.lr_actor,
            lr_critic: self.lr_critic,
            lr_alpha: self.lr_alpha,
            target_entropy: self.target_entropy.unwrap_or(-(action_dim as f64)),
            updates_per_episode: self.updates_per_episode,
            buffer_capacity: self.buffer_capacity,
            hidden: self.hidden.clone(),
        }
    }

    pub fn sl_config(&self) -> SlConfig {
        SlConfig {
            batch_size: self.batch_size,
            minibatches_per_round: self.minibatches_per_round,
            lr: self.lr,
            window_w: self.window_w,
            hidden: self.hidden.clone(),
        }
    }
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

struct SystemKindCheck;
impl SystemKindCheck {
    fn check(name: &str) -> Result<(), HarnessError> {
        SystemSpec::by_name(name)
            .map(|_| ())
            .ok_or_else(|| HarnessError::Config(format!("unknown system {name}")))
    }
}

/// A numbered ChaCha stream on the run seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Splits off the last tenth of a dataset's episodes (at least one) as the
/// fixed evaluation pool.
pub fn train_eval_split(dataset: &Dataset) -> Result<(Dataset, Dataset), HarnessError> {
    let n = dataset.episodes.len();
    if n < 2 {
        return Err(HarnessError::Data(format!(
            "need at least 2 episodes to split, found {n}"
        )));
    }
    let eval_n = (n / 10).max(1);
    let split = n - eval_n;
    let train = Dataset::new(
        dataset.spec.clone(),
        dataset.episodes[..split].to_vec(),
        dataset.provenance[..split].to_vec(),
    );
    let eval = Dataset::new(
        dataset.spec.clone(),
        dataset.episodes[split..].to_vec(),
        dataset.provenance[split..].to_vec(),
    );
    Ok((train, eval))
}

/// Picks up to `n` episode indices from `dataset`, uniformly by seed.
pub fn eval_pool(dataset: &Dataset, n: usize, seed: u64) -> Vec<usize> {
    let total = dataset.episodes.len();
    if total <= n {
        return (0..total).collect();
    }
    let mut rng = stream_rng(seed, 1);
    let mut picks = rand::seq::index::sample(&mut rng, total, n).into_vec();
    picks.sort_unstable();
    picks
}

/// Anything that can drive the environment with delta predictions.
pub trait RolloutPolicy: Sync {
    fn action(&self, env: &FwdEnv, explore: bool, rng: &mut ChaCha8Rng) -> DeltaAction;
}

impl RolloutPolicy for SacAgent {
    fn action(&self, env: &FwdEnv, explore: bool, rng: &mut ChaCha8Rng) -> DeltaAction {
        self.sample_action(&env.rollout_state().expect("reset first").obs, explore, rng)
    }
}

impl RolloutPolicy for SlAgent {
    fn action(&self, env: &FwdEnv, _explore: bool, _rng: &mut ChaCha8Rng) -> DeltaAction {
        self.predict(&env.rollout_state().expect("reset first").obs)
    }
}

/// Replays the logged one-step position deltas: a perfect-prediction probe
/// for exercising the environment and evaluation plumbing.
#[derive(Debug, Clone, Copy)]
pub struct TrueDeltaOracle;

impl RolloutPolicy for TrueDeltaOracle {
    fn action(&self, env: &FwdEnv, _explore: bool, _rng: &mut ChaCha8Rng) -> DeltaAction {
        let t = env.absolute_index();
        let episode = &env.dataset().episodes[env.rollout_state().expect("reset first").episode_index];
        DeltaAction::new(true_position_delta(&env.dataset().spec, episode.state(t), episode.state(t + 1)))
    }
}

/// What one collection pass returns.
#[derive(Debug, Clone)]
pub struct Collected {
    pub transitions: Vec<Transition>,
    pub steps: usize,
    pub total_reward: f64,
    /// Rewards paid at rollout boundaries, in order.
    pub rollout_end_rewards: Vec<f64>,
}

impl Collected {
    pub fn mean_rollout_reward(&self) -> Option<f64> {
        if self.rollout_end_rewards.is_empty() {
            None
        } else {
            Some(self.rollout_end_rewards.iter().sum::<f64>() / self.rollout_end_rewards.len() as f64)
        }
    }
}

/// Resets the environment and runs one episode (capped at `max_steps`),
/// returning replay-ready transitions with observations encoded through
/// `scaler`.
pub fn collect<P: RolloutPolicy>(
    env: &mut FwdEnv,
    policy: &P,
    scaler: &crate::dynsys::Scaler,
    explore: bool,
    max_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Collected, HarnessError> {
    let obs = env.reset(rng);
    let mut prev_enc = obs.flatten_scaled(scaler);
    let mut out = Collected {
        transitions: Vec::new(),
        steps: 0,
        total_reward: 0.0,
        rollout_end_rewards: Vec::new(),
    };
    loop {
        let action = policy.action(env, explore, rng);
        let outcome = env.step(&action).map_err(env_fault)?;
        let next_enc = outcome.obs.flatten_scaled(scaler);
        out.transitions.push(Transition {
            obs: std::mem::replace(&mut prev_enc, next_enc),
            action: action.delta,
            reward: outcome.reward,
            next_obs: prev_enc.clone(),
            terminal: outcome.terminal,
        });
        out.steps += 1;
        out.total_reward += outcome.reward;
        if outcome.rollout_terminal {
            out.rollout_end_rewards.push(outcome.reward);
        }
        if outcome.terminal || out.steps >= max_steps {
            return Ok(out);
        }
    }
}

/// One deterministic evaluation rollout over a full episode.
#[derive(Debug, Clone)]
pub struct EvalRun {
    pub rmse: f64,
    pub end_rewards: Vec<f64>,
    pub predicted: Vec<Vec<f64>>,
    pub truth: Vec<Vec<f64>>,
}

impl EvalRun {
    pub fn mean_end_reward(&self) -> Option<f64> {
        if self.end_rewards.is_empty() {
            None
        } else {
            Some(self.end_rewards.iter().sum::<f64>() / self.end_rewards.len() as f64)
        }
    }
}

/// Replays episode `episode_index` from its start with greedy actions,
/// re-grounding every `h` steps, and scores the whole trajectory.
pub fn eval_rollout_run<P: RolloutPolicy>(
    dataset: &Dataset,
    base: &FwdEnvConfig,
    h: usize,
    policy: &P,
    episode_index: usize,
) -> Result<EvalRun, HarnessError> {
    let config = FwdEnvConfig { rollout_h: h, start_offset_max: 0, ..base.clone() };
    let mut env = FwdEnv::new(dataset, config).map_err(env_fault)?;
    env.reset_to(episode_index, 0);
    let mut rng = stream_rng(0, 0);
    let mut end_rewards = Vec::new();
    loop {
        let action = policy.action(&env, false, &mut rng);
        let outcome = env.step(&action).map_err(env_fault)?;
        if outcome.rollout_terminal {
            end_rewards.push(outcome.reward);
        }
        if outcome.terminal {
            break;
        }
    }
    let rs = env.rollout_state().expect("episode just ran");
    let rmse = rmse_rollout_metric(
        &Trajectory::from_states(&rs.true_traj),
        &Trajectory::from_states(&rs.predicted_traj),
    );
    Ok(EvalRun {
        rmse,
        end_rewards,
        predicted: rs.predicted_traj.clone(),
        truth: rs.true_traj.clone(),
    })
}

/// Aggregated rollout-sweep entry for one horizon. Empty statistics mean no
/// episode in the pool was long enough.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutEvalRow {
    pub h: usize,
    pub episodes: usize,
    pub mean_rmse: Option<f64>,
    pub std_rmse: Option<f64>,
    pub mean_reward: Option<f64>,
}

/// Runs the horizon sweep over `pool` (episode indices into `dataset`).
/// Horizons no pooled episode can host are reported absent. Results are in
/// `lengths` order regardless of the parallel schedule.
pub fn eval_rollouts<P: RolloutPolicy>(
    dataset: &Dataset,
    base: &FwdEnvConfig,
    policy: &P,
    lengths: &[usize],
    pool: &[usize],
) -> Result<Vec<RolloutEvalRow>, HarnessError> {
    let mut rows = Vec::with_capacity(lengths.len());
    for &h in lengths {
        let eligible: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&i| dataset.episodes[i].len() > h)
            .collect();
        if eligible.is_empty() {
            rows.push(RolloutEvalRow {
                h,
                episodes: 0,
                mean_rmse: None,
                std_rmse: None,
                mean_reward: None,
            });
            continue;
        }
        let runs = par::map_slice(&eligible, |&i| eval_rollout_run(dataset, base, h, policy, i));
        let mut rmses = Vec::with_capacity(runs.len());
        let mut rewards = Vec::new();
        for r in runs {
            let r = r?;
            rmses.push(r.rmse);
            rewards.extend(r.end_rewards);
        }
        let n = rmses.len() as f64;
        let mean = rmses.iter().sum::<f64>() / n;
        let var = rmses.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        let mean_reward = if rewards.is_empty() {
            None
        } else {
            Some(rewards.iter().sum::<f64>() / rewards.len() as f64)
        };
        rows.push(RolloutEvalRow {
            h,
            episodes: rmses.len(),
            mean_rmse: Some(mean),
            std_rmse: Some(var.sqrt()),
            mean_reward,
        });
    }
    Ok(rows)
}

/// Column order of the rollout-sweep table.
pub const ROLLOUT_TABLE_HEADER: &str = "h,episodes,mean_rmse,std_rmse,mean_reward";

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the sweep as CSV; absent statistics stay empty cells.
pub fn write_rollout_table(path: &Path, rows: &[RolloutEvalRow]) -> Result<(), HarnessError> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{ROLLOUT_TABLE_HEADER}")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{}",
            r.h,
            r.episodes,
            opt_cell(r.mean_rmse),
            opt_cell(r.std_rmse),
            opt_cell(r.mean_reward)
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a sweep table back, naming the offending line on malformed input.
pub fn read_rollout_table(path: &Path) -> Result<Vec<RolloutEvalRow>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == ROLLOUT_TABLE_HEADER => {}
        _ => {
            return Err(HarnessError::Data(format!(
                "{}: line 1: expected header {ROLLOUT_TABLE_HEADER:?}",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(HarnessError::Data(format!(
                "{}: line {}: expected 5 cells, found {}",
                path.display(),
                i + 1,
                cells.len()
            )));
        }
        let cell = |j: usize, what: &str| -> Result<Option<f64>, HarnessError> {
            if cells[j].is_empty() {
                Ok(None)
            } else {
                cells[j].parse::<f64>().map(Some).map_err(|_| {
                    HarnessError::Data(format!(
                        "{}: line {}: cannot parse {what} {:?}",
                        path.display(),
                        i + 1,
                        cells[j]
                    ))
                })
            }
        };
        let count = |j: usize, what: &str| -> Result<usize, HarnessError> {
            cells[j].parse().map_err(|_| {
                HarnessError::Data(format!(
                    "{}: line {}: cannot parse {what} {:?}",
                    path.display(),
                    i + 1,
                    cells[j]
                ))
            })
        };
        rows.push(RolloutEvalRow {
            h: count(0, "h")?,
            episodes: count(1, "episodes")?,
            mean_rmse: cell(2, "mean_rmse")?,
            std_rmse: cell(3, "std_rmse")?,
            mean_reward: cell(4, "mean_reward")?,
        });
    }
    Ok(rows)
}

/// What a finished training run reports.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub rounds: usize,
    pub total_updates: usize,
    pub skipped_updates: usize,
    pub metrics_path: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: PathBuf,
}

fn checkpoint_path(out: &Path, round: usize) -> PathBuf {
    out.join(format!("checkpoint_{round:06}.fwdc"))
}

fn wall_ms(start: Instant, deterministic: bool) -> Option<f64> {
    if deterministic {
        None
    } else {
        Some(start.elapsed().as_secs_f64() * 1000.0)
    }
}

/// Context shared by both training loops: split datasets, scaling, bounds.
struct Prepared {
    train: Dataset,
    eval: Dataset,
    scaler: crate::dynsys::Scaler,
    bounds: crate::approx::heads::Bounds,
    env_config: FwdEnvConfig,
    obs_dim: usize,
    pool: Vec<usize>,
}

fn prepare(config: &RunConfig) -> Result<Prepared, HarnessError> {
    let dataset = load_dataset(&config.dataset)?;
    if dataset.spec.name() != config.system {
        return Err(HarnessError::Config(format!(
            "config says system {} but dataset holds {}",
            config.system,
            dataset.spec.name()
        )));
    }
    let (train, eval) = train_eval_split(&dataset)?;
    let scaler = minmax_stats(&train);
    let bounds = delta_bounds(&train);
    let env_config = config.env_config(train.spec.dt);
    let obs_dim = config.window_w * (train.spec.state_dim + train.spec.action_dim);
    let pool = eval_pool(&eval, config.eval_rollouts, config.seed);
    Ok(Prepared { train, eval, scaler, bounds, env_config, obs_dim, pool })
}

/// Algorithm: per episode, collect one exploration episode into the buffer,
/// take `updates_per_episode` gradient steps, log metrics, and checkpoint
/// on the configured cadence. A training fault aborts the run; checkpoints
/// already on disk are untouched.
pub fn train_rl(config: &RunConfig) -> Result<TrainSummary, HarnessError> {
    std::fs::create_dir_all(&config.out)?;
    let p = prepare(config)?;
    let sac_config = config.sac_config(p.bounds.dim());
    let mut agent = SacAgent::new(
        p.obs_dim,
        p.scaler.clone(),
        p.bounds.clone(),
        sac_config,
        &mut stream_rng(config.seed, 0),
    );
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut env = FwdEnv::new(&p.train, p.env_config.clone()).map_err(env_fault)?;
    let metrics_path = config.out.join("metrics.csv");
    let mut writer = MetricsWriter::create(&metrics_path)?;
    let echo = config.echo();

    let mut summary = TrainSummary {
        rounds: 0,
        total_updates: 0,
        skipped_updates: 0,
        metrics_path: metrics_path.clone(),
        checkpoints: Vec::new(),
        final_checkpoint: config.out.join("model.fwdc"),
    };

    for episode in 1..=config.episodes {
        let start = Instant::now();
        let collected = collect(
            &mut env,
            &agent,
            &p.scaler,
            true,
            config.collect_max_steps,
            &mut stream_rng(config.seed, 2 * episode as u64),
        )?;
        for tr in collected.transitions.iter() {
            buffer.push(tr.clone());
        }

        let mut stepped = Vec::new();
        let mut update_rng = stream_rng(config.seed, 2 * episode as u64 + 1);
        for _ in 0..config.updates_per_episode {
            match agent
                .update(&buffer, &mut update_rng)
                .map_err(|e| HarnessError::Training(e.to_string()))?
            {
                UpdateOutcome::Stepped(l) => {
                    stepped.push(l);
                    summary.total_updates += 1;
                }
                UpdateOutcome::Skipped => summary.skipped_updates += 1,
            }
        }

        let (rmse, reward) = if episode % config.eval_every == 0 {
            evaluate_pool(&p, &agent)?
        } else {
            (None, None)
        };

        let k = stepped.len() as f64;
        let mean_of = |f: fn(&crate::sac::Losses) -> f64| {
            if stepped.is_empty() {
                None
            } else {
                Some(stepped.iter().map(f).sum::<f64>() / k)
            }
        };
        writer.write(&MetricsRecord {
            round: episode,
            critic_loss: mean_of(|l| l.critic_loss),
            actor_loss: mean_of(|l| l.actor_loss),
            alpha: mean_of(|l| l.alpha),
            supervised_mse: None,
            rmse_rollout: rmse,
            mean_rollout_reward: reward,
            total_env_reward: Some(collected.total_reward),
            wall_ms: wall_ms(start, config.deterministic_timing),
        })?;

        if episode % config.checkpoint_every == 0 {
            let path = checkpoint_path(&config.out, episode);
            agent.to_checkpoint(echo.clone()).save(&path)?;
            summary.checkpoints.push(path);
        }
        summary.rounds = episode;
    }

    agent.to_checkpoint(echo).save(&summary.final_checkpoint)?;
    Ok(summary)
}

/// The supervised twin of [`train_rl`]: one round is `minibatches_per_round`
/// gradient steps on true one-step examples; evaluation and checkpoint
/// cadences are identical so the CSVs compare row for row.
pub fn train_sl(config: &RunConfig) -> Result<TrainSummary, HarnessError> {
    std::fs::create_dir_all(&config.out)?;
    let p = prepare(config)?;
    let mut agent = SlAgent::new(
        p.obs_dim,
        p.scaler.clone(),
        p.bounds.clone(),
        config.sl_config(),
        &mut stream_rng(config.seed, 0),
    );
    let metrics_path = config.out.join("metrics.csv");
    let mut writer = MetricsWriter::create(&metrics_path)?;
    let echo = config.echo();

    let mut summary = TrainSummary {
        rounds: 0,
        total_updates: 0,
        skipped_updates: 0,
        metrics_path: metrics_path.clone(),
        checkpoints: Vec::new(),
        final_checkpoint: config.out.join("model.fwdc"),
    };

    for round in 1..=config.episodes {
        let start = Instant::now();
        let mse = agent
            .sl_round(&p.train, &mut stream_rng(config.seed, 2 * round as u64))
            .map_err(|e| HarnessError::Training(e.to_string()))?;
        summary.total_updates += config.minibatches_per_round;

        let (rmse, reward) = if round % config.eval_every == 0 {
            evaluate_pool(&p, &agent)?
        } else {
            (None, None)
        };

        writer.write(&MetricsRecord {
            round,
            critic_loss: None,
            actor_loss: None,
            alpha: None,
            supervised_mse: Some(mse),
            rmse_rollout: rmse,
            mean_rollout_reward: reward,
            total_env_reward: None,
            wall_ms: wall_ms(start, config.deterministic_timing),
        })?;

        if round % config.checkpoint_every == 0 {
            let path = checkpoint_path(&config.out, round);
            agent.to_checkpoint(echo.clone()).save(&path)?;
            summary.checkpoints.push(path);
        }
        summary.rounds = round;
    }

    agent.to_checkpoint(echo).save(&summary.final_checkpoint)?;
    Ok(summary)
}

fn evaluate_pool<P: RolloutPolicy>(
    p: &Prepared,
    policy: &P,
) -> Result<(Option<f64>, Option<f64>), HarnessError> {
    let runs = par::map_slice(&p.pool, |&i| {
        eval_rollout_run(&p.eval, &p.env_config, p.env_config.rollout_h, policy, i)
    });
    let mut rmses = Vec::new();
    let mut rewards = Vec::new();
    for r in runs {
        let r = r?;
        rmses.push(r.rmse);
        rewards.extend(r.end_rewards);
    }
    let mean = |v: &[f64]| {
        if v.is_empty() { None } else { Some(v.iter().sum::<f64>() / v.len() as f64) }
    };
    Ok((mean(&rmses), mean(&rewards)))
}

/// Generates a dataset per the config's `gen_*` fields and saves it to the
/// config's dataset path.
pub fn run_gen(config: &RunConfig) -> Result<PathBuf, HarnessError> {
    let spec = SystemSpec::by_name(&config.system)
        .ok_or_else(|| HarnessError::Config(format!("unknown system {}", config.system)))?;
    let dataset = generate_dataset(
        &spec,
        &config.behavior_mix,
        config.gen_episodes,
        config.gen_max_len,
        config.seed,
    )
    .map_err(|e| HarnessError::Data(e.to_string()))?;
    if let Some(dir) = config.dataset.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    save_dataset(&config.dataset, &dataset)?;
    Ok(config.dataset.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::arch_fingerprint;

    fn gen_to(dir: &Path, system: &str, episodes: usize, len: usize, seed: u64) -> PathBuf {
        let path = dir.join(format!("{system}.fwdb"));
        let spec = SystemSpec::by_name(system).unwrap();
        let mix = vec!["random".to_string(), "sinusoid".to_string()];
        let d = generate_dataset(&spec, &mix, episodes, len, seed).unwrap();
        save_dataset(&path, &d).unwrap();
        path
    }

    fn tiny_config(dir: &Path, dataset: PathBuf) -> RunConfig {
        let mut c = RunConfig::default();
        c.system = "msd".to_string();
        c.dataset = dataset;
        c.out = dir.join("run");
        c.seed = 11;
        c.episodes = 3;
        c.eval_every = 1;
        c.checkpoint_every = 2;
        c.collect_max_steps = 60;
        c.deterministic_timing = true;
        c.window_w = 3;
        c.rollout_h = 10;
        c.start_offset_max = 2;
        c.hidden = vec![8, 8];
        c.batch_size = 128;
        c.n_quantiles = 8;
        c.buffer_capacity = 4000;
        c.minibatches_per_round = 5;
        c.eval_rollouts = 2;
        c
    }

    #[test]
    fn defaults_parse_and_echo_round_trips() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.eval_lengths, vec![50, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000]);
        let echoed = RunConfig::parse(&c.echo()).unwrap();
        assert_eq!(echoed, c);

        let mut custom = c.clone();
        custom.apply("reward_mode", "fully_sparse").unwrap();
        custom.apply("hidden", "32,16").unwrap();
        custom.apply("dt", "0.01").unwrap();
        let back = RunConfig::parse(&custom.echo()).unwrap();
        assert_eq!(back, custom);
    }

    #[test]
    fn unknown_duplicate_and_malformed_keys_are_config_errors() {
        let err = RunConfig::parse("learning_rate=1e-3").unwrap_err();
        assert!(matches!(err, HarnessError::Config(ref m) if m.contains("learning_rate")));
        assert_eq!(err.exit_code(), 2);

        let err = RunConfig::parse("seed=1\nseed=2").unwrap_err();
        assert!(matches!(err, HarnessError::Config(ref m) if m.contains("duplicate")));

        let err = RunConfig::parse("episodes=banana").unwrap_err();
        assert!(matches!(err, HarnessError::Config(ref m) if m.contains("episodes")));

        let err = RunConfig::parse("episodes").unwrap_err();
        assert!(matches!(err, HarnessError::Config(ref m) if m.contains("key=value")));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let c = RunConfig::parse("# a comment\n\n  seed = 9 \n").unwrap();
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn split_reserves_the_last_tenth() {
        let dir = tempfile::tempdir().unwrap();
        let path = gen_to(dir.path(), "msd", 20, 30, 1);
        let d = load_dataset(&path).unwrap();
        let (train, eval) = train_eval_split(&d).unwrap();
        assert_eq!(train.episodes.len(), 18);
        assert_eq!(eval.episodes.len(), 2);
        assert_eq!(eval.episodes[0].state(0), d.episodes[18].state(0));
    }

    #[test]
    fn collect_respects_max_steps_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let path = gen_to(dir.path(), "msd", 4, 50, 2);
        let d = load_dataset(&path).unwrap();
        let scaler = minmax_stats(&d);
        let config = RunConfig::default();
        let mut env_config = config.env_config(d.spec.dt);
        env_config.window_w = 3;
        env_config.rollout_h = 5;
        env_config.start_offset_max = 0;
        let mut env = FwdEnv::new(&d, env_config).unwrap();

        let one = collect(&mut env, &TrueDeltaOracle, &scaler, false, 1, &mut stream_rng(5, 2))
            .unwrap();
        assert_eq!(one.transitions.len(), 1);

        let a = collect(&mut env, &TrueDeltaOracle, &scaler, false, 40, &mut stream_rng(5, 2))
            .unwrap();
        let b = collect(&mut env, &TrueDeltaOracle, &scaler, false, 40, &mut stream_rng(5, 2))
            .unwrap();
        assert_eq!(a.transitions, b.transitions);
    }

    #[test]
    fn a_perfect_oracle_collects_zero_reward() {
        let dir = tempfile::tempdir().unwrap();
        for system in ["pendulum", "msd"] {
            let path = gen_to(dir.path(), system, 3, 100, 3);
            let d = load_dataset(&path).unwrap();
            let scaler = minmax_stats(&d);
            let mut env_config = RunConfig::default().env_config(d.spec.dt);
            env_config.window_w = 4;
            env_config.rollout_h = 20;
            env_config.start_offset_max = 0;
            let mut env = FwdEnv::new(&d, env_config).unwrap();
            let c = collect(&mut env, &TrueDeltaOracle, &scaler, false, 10_000, &mut stream_rng(1, 2))
                .unwrap();
            assert_eq!(c.steps, 100);
            assert!(
                c.total_reward.abs() <= 1e-6,
                "{system}: perfect predictions should earn ~0, got {}",
                c.total_reward
            );
            assert_eq!(c.rollout_end_rewards.len(), 5);
        }
    }

    #[test]
    fn oracle_rollouts_have_vanishing_rmse_at_every_horizon() {
        let dir = tempfile::tempdir().unwrap();
        let path = gen_to(dir.path(), "pendulum", 3, 120, 4);
        let d = load_dataset(&path).unwrap();
        let base = RunConfig::default().env_config(d.spec.dt);
        let rows =
            eval_rollouts(&d, &base, &TrueDeltaOracle, &[10, 30, 60], &[0, 1, 2]).unwrap();
        for row in rows {
            assert_eq!(row.episodes, 3);
            assert!(row.mean_rmse.unwrap() <= 1e-12, "h={}: {:?}", row.h, row.mean_rmse);
        }
    }

    #[test]
    fn horizons_longer_than_every_episode_are_reported_absent() {
        let dir = tempfile::tempdir().unwrap();
        let path = gen_to(dir.path(), "msd", 3, 40, 5);
        let d = load_dataset(&path).unwrap();
        let base = RunConfig::default().env_config(d.spec.dt);
        let rows = eval_rollouts(&d, &base, &TrueDeltaOracle, &[10, 500], &[0, 1, 2]).unwrap();
        assert_eq!(rows[0].episodes, 3);
        assert_eq!(rows[1].episodes, 0);
        assert_eq!(rows[1].mean_rmse, None);
        assert_eq!(rows[1].mean_reward, None);
    }

    struct FrozenPolicy;
    impl RolloutPolicy for FrozenPolicy {
        fn action(&self, env: &FwdEnv, _: bool, _: &mut ChaCha8Rng) -> DeltaAction {
            DeltaAction::new(vec![0.0; env.dataset().spec.pos_dim()])
        }
    }

    #[test]
    fn frozen_predictions_drift_more_at_longer_horizons() {
        let dir = tempfile::tempdir().unwrap();
        let path = gen_to(dir.path(), "pendulum", 3, 200, 6);
        let d = load_dataset(&path).unwrap();
        let base = RunConfig::default().env_config(d.spec.dt);
        let rows = eval_rollouts(&d, &base, &FrozenPolicy, &[10, 50, 150], &[0, 1, 2]).unwrap();
        let rmses: Vec<f64> = rows.iter().map(|r| r.mean_rmse.unwrap()).collect();
        assert!(rmses[0] < rmses[1] && rmses[1] < rmses[2], "drift must grow: {rmses:?}");
    }

    #[test]
    fn rl_smoke_run_writes_metrics_checkpoints_and_accounting() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = gen_to(dir.path(), "msd", 6, 80, 7);
        let config = tiny_config(dir.path(), dataset);
        let summary = train_rl(&config).unwrap();

        assert_eq!(summary.rounds, 3);
        assert_eq!(
            summary.total_updates + summary.skipped_updates,
            3 * config.updates_per_episode
        );
        assert!(summary.skipped_updates > 0, "first rounds must skip on a cold buffer");
        assert!(summary.total_updates > 0);

        let rows = metrics::read_metrics(&summary.metrics_path).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].round, 1);
        assert_eq!(rows[0].critic_loss, None, "skipped updates must leave losses empty");
        assert!(rows[2].critic_loss.is_some());
        assert!(rows.iter().all(|r| r.supervised_mse.is_none()));
        assert!(rows.iter().all(|r| r.total_env_reward.is_some()));
        assert!(rows.iter().all(|r| r.wall_ms.is_none()));
        assert!(rows.iter().all(|r| r.rmse_rollout.is_some()), "eval_every=1");

        assert_eq!(summary.checkpoints, vec![config.out.join("checkpoint_000002.fwdc")]);
        assert!(summary.checkpoints[0].exists());
        assert!(summary.final_checkpoint.exists());
    }

    #[test]
    fn rl_runs_reproduce_byte_identical_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = gen_to(dir.path(), "msd", 6, 80, 8);
        let mut a = tiny_config(dir.path(), dataset.clone());
        a.out = dir.path().join("a");
        let mut b = tiny_config(dir.path(), dataset);
        b.out = dir.path().join("b");
        let sa = train_rl(&a).unwrap();
        let sb = train_rl(&b).unwrap();
        let csv_a = std::fs::read(&sa.metrics_path).unwrap();
        let csv_b = std::fs::read(&sb.metrics_path).unwrap();
        assert_eq!(csv_a, csv_b, "same config and seed must reproduce the CSV");
        let cp_a = std::fs::read(&sa.final_checkpoint).unwrap();
        let mut cp_b = std::fs::read(&sb.final_checkpoint).unwrap();
        // The config echo embeds the out dir, the only permitted difference.
        let echo_a = a.echo();
        let echo_b = b.echo();
        let pos = cp_b
            .windows(echo_b.len())
            .position(|w| w == echo_b.as_bytes())
            .expect("echo embedded");
        cp_b.splice(pos..pos + echo_b.len(), echo_a.bytes());
        assert_eq!(cp_a.len(), cp_b.len() + echo_a.len() - echo_b.len());
    }

    #[test]
    fn sl_smoke_run_fills_the_supervised_columns_only() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = gen_to(dir.path(), "msd", 6, 80, 9);
        let mut config = tiny_config(dir.path(), dataset);
        config.out = dir.path().join("sl");
        let summary = train_sl(&config).unwrap();

        assert_eq!(summary.rounds, 3);
        assert_eq!(summary.total_updates, 3 * config.minibatches_per_round);
        let rows = metrics::read_metrics(&summary.metrics_path).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert_eq!(r.critic_loss, None);
            assert_eq!(r.actor_loss, None);
            assert_eq!(r.alpha, None);
            assert_eq!(r.total_env_reward, None);
            assert!(r.supervised_mse.is_some());
            assert!(r.rmse_rollout.is_some());
        }
        assert!(summary.final_checkpoint.exists());

        let mut again = config.clone();
        again.out = dir.path().join("sl2");
        let s2 = train_sl(&again).unwrap();
        assert_eq!(
            std::fs::read_to_string(&summary.metrics_path).unwrap(),
            std::fs::read_to_string(&s2.metrics_path).unwrap()
        );
    }

    #[test]
    fn evaluation_leaves_agent_parameters_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = gen_to(dir.path(), "msd", 6, 80, 10);
        let config = tiny_config(dir.path(), dataset);
        let d = load_dataset(&config.dataset).unwrap();
        let (train, eval) = train_eval_split(&d).unwrap();
        let scaler = minmax_stats(&train);
        let bounds = delta_bounds(&train);
        let agent = SacAgent::new(
            config.window_w * 3,
            scaler,
            bounds,
            config.sac_config(1),
            &mut stream_rng(config.seed, 0),
        );
        let before = agent.to_checkpoint(String::new());
        let base = config.env_config(train.spec.dt);
        eval_rollouts(&eval, &base, &agent, &[10, 20], &[0]).unwrap();
        let after = agent.to_checkpoint(String::new());
        assert_eq!(before, after);
        assert_eq!(
            arch_fingerprint(before.network("actor").unwrap().arch()),
            arch_fingerprint(after.network("actor").unwrap().arch())
        );
    }

    #[test]
    fn rollout_tables_round_trip_including_absent_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let rows = vec![
            RolloutEvalRow {
                h: 50,
                episodes: 3,
                mean_rmse: Some(0.25),
                std_rmse: Some(0.01),
                mean_reward: Some(-1.5),
            },
            RolloutEvalRow { h: 5000, episodes: 0, mean_rmse: None, std_rmse: None, mean_reward: None },
        ];
        write_rollout_table(&path, &rows).unwrap();
        assert_eq!(read_rollout_table(&path).unwrap(), rows);

        std::fs::write(&path, format!("{ROLLOUT_TABLE_HEADER}\n50,3,0.1,0.2,0.3\n60,oops,,,\n"))
            .unwrap();
        let err = read_rollout_table(&path).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(err.to_string().contains("oops"), "{err}");
    }

    #[test]
    fn gen_writes_a_loadable_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = RunConfig::default();
        config.system = "pendulum".to_string();
        config.dataset = dir.path().join("data").join("p.fwdt");
        config.gen_episodes = 4;
        config.gen_max_len = 30;
        config.seed = 12;
        let path = run_gen(&config).unwrap();
        let d = load_dataset(&path).unwrap();
        assert_eq!(d.episodes.len(), 4);
        assert_eq!(d.episodes[0].len(), 30);
        assert_eq!(d.spec.name(), "pendulum");
    }

    #[test]
    fn mismatched_system_and_dataset_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = gen_to(dir.path(), "pendulum", 4, 60, 13);
        let mut config = tiny_config(dir.path(), dataset);
        config.system = "msd".to_string();
        let err = train_rl(&config).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
