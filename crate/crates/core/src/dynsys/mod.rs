//! Reference dynamical systems and trajectory datasets.
//!
//! Two built-in systems stand in for heavyweight physics backends: a damped
//! pendulum (nonlinear) and a mass-spring-damper (linear, so least-squares
//! oracles are exact). Both advance with semi-implicit Euler so that the
//! position update is exactly `q' = q + dt * v'`, which keeps "the true delta
//! reproduces the trajectory bit-for-bit" checks meaningful downstream.
//!
//! [`generate_dataset`] rolls out behavior policies (uniform random,
//! swept sinusoid, bang-bang) from randomized initial states. Every episode
//! draws from its own counter-derived RNG stream, so generation is
//! deterministic per seed and schedule-independent under the `parallel`
//! feature.

pub mod io;

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::par;

/// Identifies a built-in system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Pendulum,
    MassSpringDamper,
}

impl SystemKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "pendulum" => Some(Self::Pendulum),
            "msd" => Some(Self::MassSpringDamper),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Pendulum => "pendulum",
            Self::MassSpringDamper => "msd",
        }
    }
}

/// Anything that can go wrong inside this module.
#[derive(Debug, thiserror::Error)]
pub enum DynError {
    #[error("non-finite {what} passed to the {system} stepper")]
    NonFinite { system: &'static str, what: &'static str },
    #[error("unknown behavior policy '{0}' (expected random, sinusoid, or bangbang)")]
    UnknownPolicy(String),
    #[error("no episodes of length >= {min_len} remain after filtering")]
    EmptyAfterFilter { min_len: usize },
}

/// Static description of a system: dimensions, step size, control bounds,
/// and named physical constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub state_dim: usize,
    pub action_dim: usize,
    pub dt: f64,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub params: BTreeMap<String, f64>,
}

impl SystemSpec {
    /// Damped pendulum; state `(theta, omega)`, action is a torque.
    ///
    /// Defaults: `g = 9.81`, `l = 1`, `m = 1`, `c = 0.1`, torque in ±2,
    /// `dt = 0.05`.
    pub fn pendulum() -> Self {
        let params = BTreeMap::from([
            ("g".to_string(), 9.81),
            ("l".to_string(), 1.0),
            ("m".to_string(), 1.0),
            ("c".to_string(), 0.1),
        ]);
        Self {
            kind: SystemKind::Pendulum,
            state_dim: 2,
            action_dim: 1,
            dt: 0.05,
            action_low: vec![-2.0],
            action_high: vec![2.0],
            params,
        }
    }

    /// Mass-spring-damper; state `(x, v)`, action is a force.
    ///
    /// Defaults: `k = 1`, `m = 1`, `c = 0.2`, force in ±1, `dt = 0.05`.
    pub fn msd() -> Self {
        let params = BTreeMap::from([
            ("k".to_string(), 1.0),
            ("m".to_string(), 1.0),
            ("c".to_string(), 0.2),
        ]);
        Self {
            kind: SystemKind::MassSpringDamper,
            state_dim: 2,
            action_dim: 1,
            dt: 0.05,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            params,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        SystemKind::parse(name).map(|kind| match kind {
            SystemKind::Pendulum => Self::pendulum(),
            SystemKind::MassSpringDamper => Self::msd(),
        })
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    fn param(&self, key: &str) -> f64 {
        *self
            .params
            .get(key)
            .unwrap_or_else(|| panic!("system '{}' lacks parameter '{key}'", self.name()))
    }

    /// Number of position coordinates; states are laid out positions first,
    /// velocities second.
    pub fn pos_dim(&self) -> usize {
        self.state_dim / 2
    }

    /// Which position coordinates are angles wrapped to `(-pi, pi]`.
    pub fn angular_pos(&self) -> Vec<bool> {
        match self.kind {
            SystemKind::Pendulum => vec![true],
            SystemKind::MassSpringDamper => vec![false],
        }
    }

    /// One dynamics step, dispatching on the system kind.
    pub fn step(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>, DynError> {
        match self.kind {
            SystemKind::Pendulum => step_pendulum(state, action, self),
            SystemKind::MassSpringDamper => step_msd(state, action, self),
        }
    }

    /// Uniformly random initial state within the documented per-system range.
    ///
    /// Pendulum: `theta` uniform over the wrapped circle, `omega` in
    /// `[-1, 1]`. Mass-spring-damper: `x` and `v` in `[-1, 1]`.
    pub fn sample_initial_state<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self.kind {
            SystemKind::Pendulum => vec![
                wrap_angle(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)),
                rng.gen_range(-1.0..1.0),
            ],
            SystemKind::MassSpringDamper => {
                vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
            }
        }
    }
}

/// Wraps an angle to `(-pi, pi]`.
///
/// Values already inside the interval are returned unchanged (bit-for-bit),
/// so wrapping never perturbs states that need no wrapping.
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    if x > -PI && x <= PI {
        return x;
    }
    let y = (PI - x).rem_euclid(2.0 * PI);
    PI - y
}

fn check_finite(system: &'static str, state: &[f64], action: &[f64]) -> Result<(), DynError> {
    if !state.iter().all(|v| v.is_finite()) {
        return Err(DynError::NonFinite { system, what: "state" });
    }
    if !action.iter().all(|v| v.is_finite()) {
        return Err(DynError::NonFinite { system, what: "action" });
    }
    Ok(())
}

/// Semi-implicit Euler step of the damped pendulum:
/// `omega' = omega + dt * (-(g/l) sin(theta) - c*omega + u/(m*l^2))`,
/// `theta' = wrap(theta + dt * omega')`.
pub fn step_pendulum(
    state: &[f64],
    action: &[f64],
    spec: &SystemSpec,
) -> Result<Vec<f64>, DynError> {
    assert_eq!(state.len(), 2, "pendulum state is (theta, omega)");
    assert_eq!(action.len(), 1, "pendulum action is a single torque");
    check_finite("pendulum", state, action)?;
    let (g, l, m, c) = (spec.param("g"), spec.param("l"), spec.param("m"), spec.param("c"));
    let (theta, omega) = (state[0], state[1]);
    let u = action[0];
    let omega_next = omega + spec.dt * (-(g / l) * theta.sin() - c * omega + u / (m * l * l));
    let theta_next = wrap_angle(theta + spec.dt * omega_next);
    Ok(vec![theta_next, omega_next])
}

/// Semi-implicit Euler step of the mass-spring-damper:
/// `v' = v + dt * (-(k/m) x - (c/m) v + u/m)`, `x' = x + dt * v'`.
pub fn step_msd(state: &[f64], action: &[f64], spec: &SystemSpec) -> Result<Vec<f64>, DynError> {
    assert_eq!(state.len(), 2, "mass-spring-damper state is (x, v)");
    assert_eq!(action.len(), 1, "mass-spring-damper action is a single force");
    check_finite("msd", state, action)?;
    let (k, m, c) = (spec.param("k"), spec.param("m"), spec.param("c"));
    let (x, v) = (state[0], state[1]);
    let u = action[0];
    let v_next = v + spec.dt * (-(k / m) * x - (c / m) * v + u / m);
    let x_next = x + spec.dt * v_next;
    Ok(vec![x_next, v_next])
}

/// One `(state, action, next_state)` triple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
}

/// A contiguous trajectory of `len` transitions, stored as `len + 1` states
/// and `len` actions so consecutive transitions chain by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
}

impl Episode {
    pub fn new(states: Vec<Vec<f64>>, actions: Vec<Vec<f64>>) -> Self {
        assert!(!actions.is_empty(), "episode needs at least one transition");
        assert_eq!(states.len(), actions.len() + 1, "need one more state than actions");
        let n = states[0].len();
        let m = actions[0].len();
        for s in &states {
            assert_eq!(s.len(), n, "ragged states");
            assert!(s.iter().all(|v| v.is_finite()), "non-finite state");
        }
        for a in &actions {
            assert_eq!(a.len(), m, "ragged actions");
            assert!(a.iter().all(|v| v.is_finite()), "non-finite action");
        }
        Self { states, actions }
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// States visited, one more than [`Episode::len`].
    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t]
    }

    pub fn action(&self, t: usize) -> &[f64] {
        &self.actions[t]
    }

    /// The `i`-th transition as an owned triple.
    pub fn transition(&self, i: usize) -> Transition {
        Transition {
            state: self.states[i].clone(),
            action: self.actions[i].clone(),
            next_state: self.states[i + 1].clone(),
        }
    }
}

/// A system description plus the episodes recorded on it. `provenance` names
/// the behavior policy behind each episode, parallel to `episodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: SystemSpec,
    pub episodes: Vec<Episode>,
    pub provenance: Vec<String>,
}

impl Dataset {
    pub fn new(spec: SystemSpec, episodes: Vec<Episode>, provenance: Vec<String>) -> Self {
        assert_eq!(episodes.len(), provenance.len(), "one provenance tag per episode");
        for e in &episodes {
            assert_eq!(e.states[0].len(), spec.state_dim, "episode/state width mismatch");
            assert_eq!(e.actions[0].len(), spec.action_dim, "episode/action width mismatch");
        }
        Self { spec, episodes, provenance }
    }

    pub fn total_transitions(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }
}

/// The supported behavior policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BehaviorPolicy {
    /// Fresh uniform action every step.
    Random,
    /// Per-episode randomized sinusoid whose frequency sweeps upward.
    Sinusoid,
    /// Holds a random corner of the action box for a random 5..=20 step dwell.
    BangBang,
}

impl BehaviorPolicy {
    pub fn parse(name: &str) -> Result<Self, DynError> {
        match name {
            "random" => Ok(Self::Random),
            "sinusoid" => Ok(Self::Sinusoid),
            "bangbang" => Ok(Self::BangBang),
            other => Err(DynError::UnknownPolicy(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Sinusoid => "sinusoid",
            Self::BangBang => "bangbang",
        }
    }
}

enum PolicyState {
    Random,
    Sinusoid { amp: Vec<f64>, phase: Vec<f64>, cycles0: f64, sweep: f64, horizon: f64 },
    BangBang { hold_until: usize, current: Vec<f64> },
}

impl PolicyState {
    fn prepare(policy: BehaviorPolicy, spec: &SystemSpec, max_len: usize, rng: &mut ChaCha8Rng) -> Self {
        match policy {
            BehaviorPolicy::Random => Self::Random,
            BehaviorPolicy::Sinusoid => {
                let amp = (0..spec.action_dim)
                    .map(|d| {
                        let half = (spec.action_high[d] - spec.action_low[d]) / 2.0;
                        rng.gen_range(0.3..1.0) * half
                    })
                    .collect();
                let phase = (0..spec.action_dim)
                    .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                    .collect();
                Self::Sinusoid {
                    amp,
                    phase,
                    cycles0: rng.gen_range(0.01..0.08),
                    sweep: rng.gen_range(0.0..0.04),
                    horizon: max_len as f64,
                }
            }
            BehaviorPolicy::BangBang => Self::BangBang { hold_until: 0, current: vec![0.0; spec.action_dim] },
        }
    }

    fn action(&mut self, t: usize, spec: &SystemSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Self::Random => (0..spec.action_dim)
                .map(|d| rng.gen_range(spec.action_low[d]..spec.action_high[d]))
                .collect(),
            Self::Sinusoid { amp, phase, cycles0, sweep, horizon } => {
                let cycles = *cycles0 + *sweep * t as f64 / *horizon;
                (0..spec.action_dim)
                    .map(|d| {
                        let mid = (spec.action_low[d] + spec.action_high[d]) / 2.0;
                        let raw = mid
                            + amp[d]
                                * (std::f64::consts::TAU * cycles * t as f64 + phase[d]).sin();
                        raw.clamp(spec.action_low[d], spec.action_high[d])
                    })
                    .collect()
            }
            Self::BangBang { hold_until, current } => {
                if t >= *hold_until {
                    for (d, slot) in current.iter_mut().enumerate() {
                        *slot = if rng.gen_bool(0.5) {
                            spec.action_high[d]
                        } else {
                            spec.action_low[d]
                        };
                    }
                    *hold_until = t + rng.gen_range(5..=20);
                }
                current.clone()
            }
        }
    }
}

/// Rolls out `n_episodes` episodes of exactly `max_len` transitions each,
/// cycling through `behavior_mix` round-robin.
///
/// Episode `e` draws from RNG stream `e` of a generator seeded with `seed`,
/// so the result is identical however episodes are scheduled across threads.
pub fn generate_dataset(
    spec: &SystemSpec,
    behavior_mix: &[String],
    n_episodes: usize,
    max_len: usize,
    seed: u64,
) -> Result<Dataset, DynError> {
    assert!(n_episodes >= 1, "need at least one episode");
    assert!(max_len >= 2, "need at least two steps per episode");
    let policies = behavior_mix
        .iter()
        .map(|name| BehaviorPolicy::parse(name))
        .collect::<Result<Vec<_>, _>>()?;
    assert!(!policies.is_empty(), "empty behavior mix");

    let runs = par::map_indexed(n_episodes, |e| {
        let policy = policies[e % policies.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(e as u64);
        let mut state = spec.sample_initial_state(&mut rng);
        let mut policy_state = PolicyState::prepare(policy, spec, max_len, &mut rng);
        let mut states = Vec::with_capacity(max_len + 1);
        let mut actions = Vec::with_capacity(max_len);
        states.push(state.clone());
        for t in 0..max_len {
            let action = policy_state.action(t, spec, &mut rng);
            state = spec
                .step(&state, &action)
                .expect("finite states and actions stay finite under the built-in dynamics");
            states.push(state.clone());
            actions.push(action);
        }
        (Episode::new(states, actions), policy.name().to_string())
    });

    let mut episodes = Vec::with_capacity(n_episodes);
    let mut provenance = Vec::with_capacity(n_episodes);
    for (episode, tag) in runs {
        episodes.push(episode);
        provenance.push(tag);
    }
    Ok(Dataset::new(spec.clone(), episodes, provenance))
}

/// Keeps only episodes with at least `min_len` transitions, preserving
/// order; erroring out when nothing remains.
pub fn filter_episodes(dataset: &Dataset, min_len: usize) -> Result<Dataset, DynError> {
    assert!(min_len >= 1, "min_len must be at least 1");
    let mut episodes = Vec::new();
    let mut provenance = Vec::new();
    for (e, tag) in dataset.episodes.iter().zip(&dataset.provenance) {
        if e.len() >= min_len {
            episodes.push(e.clone());
            provenance.push(tag.clone());
        }
    }
    if episodes.is_empty() {
        return Err(DynError::EmptyAfterFilter { min_len });
    }
    Ok(Dataset::new(dataset.spec.clone(), episodes, provenance))
}

/// Per-dimension min-max normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Scaler {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Self {
        assert_eq!(min.len(), max.len(), "bound length mismatch");
        assert!(min.iter().zip(&max).all(|(a, b)| a <= b), "min must not exceed max");
        Self { min, max }
    }

    /// Fits statistics over an iterator of equally wide rows.
    pub fn fit<'a>(mut rows: impl Iterator<Item = &'a [f64]>) -> Self {
        let first = rows.next().expect("cannot fit a scaler on no data");
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in rows {
            assert_eq!(row.len(), min.len(), "ragged rows");
            for (d, v) in row.iter().enumerate() {
                min[d] = min[d].min(*v);
                max[d] = max[d].max(*v);
            }
        }
        Self { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    /// Maps `x` to `(x - min) / (max - min)` per dimension; dimensions with
    /// `min == max` map to 0.
    pub fn scale(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.min.len(), "width mismatch");
        x.iter()
            .enumerate()
            .map(|(d, v)| {
                let span = self.max[d] - self.min[d];
                if span == 0.0 {
                    0.0
                } else {
                    (v - self.min[d]) / span
                }
            })
            .collect()
    }
}

/// Min-max statistics over every state and action in the dataset; the
/// scaler's width is `state_dim + action_dim`, states first.
pub fn minmax_stats(dataset: &Dataset) -> Scaler {
    assert!(!dataset.episodes.is_empty(), "cannot scale an empty dataset");
    let n = dataset.spec.state_dim;
    let m = dataset.spec.action_dim;
    let mut min = vec![f64::INFINITY; n + m];
    let mut max = vec![f64::NEG_INFINITY; n + m];
    for e in &dataset.episodes {
        for s in e.states() {
            for d in 0..n {
                min[d] = min[d].min(s[d]);
                max[d] = max[d].max(s[d]);
            }
        }
        for a in e.actions() {
            for d in 0..m {
                min[n + d] = min[n + d].min(a[d]);
                max[n + d] = max[n + d].max(a[d]);
            }
        }
    }
    Scaler::new(min, max)
}
