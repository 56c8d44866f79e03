//! Policy and value heads on top of the bare [`super::Mlp`]: the
//! bounded-action squashed-Gaussian sampler with its analytic derivatives,
//! and the fixed-fraction quantile head with its Huber regression loss.

use rand::Rng;
use rand_distr::StandardNormal;

/// Clamp range applied to raw log standard deviations.
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Guard added to `1 - tanh(u)^2` inside the squashing log-density.
pub const TANH_EPS: f64 = 1e-6;

const LN_SQRT_2PI: f64 = 0.918938533204672741780329736406;

/// Per-dimension closed interval box, `low[i] < high[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    low: Vec<f64>,
    high: Vec<f64>,
}

impl Bounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Self {
        assert_eq!(low.len(), high.len(), "bound length mismatch");
        assert!(
            low.iter().zip(&high).all(|(l, h)| l.is_finite() && h.is_finite() && l < h),
            "bounds must be finite with low < high"
        );
        Self { low, high }
    }

    /// The same `[low, high]` interval in every dimension.
    pub fn uniform(dim: usize, low: f64, high: f64) -> Self {
        Self::new(vec![low; dim], vec![high; dim])
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn clamp(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim());
        v.iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(x, (l, h))| x.clamp(*l, *h))
            .collect()
    }
}

/// Maps a bounded value to the tanh output range `(-1, 1)` (affinely; values
/// on the boundary map to exactly ±1).
pub fn bound_to_unit(bounds: &Bounds, value: &[f64]) -> Vec<f64> {
    assert_eq!(value.len(), bounds.dim());
    value
        .iter()
        .zip(bounds.low.iter().zip(&bounds.high))
        .map(|(v, (l, h))| 2.0 * (v - l) / (h - l) - 1.0)
        .collect()
}

/// Inverse of [`bound_to_unit`].
pub fn unit_to_bound(bounds: &Bounds, t: &[f64]) -> Vec<f64> {
    assert_eq!(t.len(), bounds.dim());
    t.iter()
        .zip(bounds.low.iter().zip(&bounds.high))
        .map(|(ti, (l, h))| l + (ti + 1.0) / 2.0 * (h - l))
        .collect()
}

/// Mean and clamped log standard deviation of a diagonal Gaussian in
/// pre-squash space.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHeadOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl GaussianHeadOutput {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Self {
        assert_eq!(mean.len(), log_std.len(), "head width mismatch");
        let log_std = log_std
            .into_iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        Self { mean, log_std }
    }

    /// Splits a policy network output of width `2 * action_dim` into mean
    /// and clamped log-std halves.
    pub fn from_policy_output(out: &[f64]) -> Self {
        assert!(out.len() % 2 == 0, "policy output width must be even");
        let d = out.len() / 2;
        Self::new(out[..d].to_vec(), out[d..].to_vec())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Per-dimension pass-through mask for the log-std half of a policy output:
/// 1 where the clamp is inactive, 0 where it saturated.
pub fn log_std_grad_mask(raw_log_std: &[f64]) -> Vec<f64> {
    raw_log_std
        .iter()
        .map(|v| if (LOG_STD_MIN..=LOG_STD_MAX).contains(v) { 1.0 } else { 0.0 })
        .collect()
}

/// `tanh(u)` held strictly inside `(-1, 1)`.
///
/// `f64::tanh` rounds to exactly ±1.0 past |u| ≈ 19, which would park
/// actions exactly on their bounds; the clamp keeps them strictly interior
/// while moving the value by at most 1e-12.
fn squash(u: f64) -> f64 {
    u.tanh().clamp(-1.0 + 1e-12, 1.0 - 1e-12)
}

/// A bounded action sample together with the analytic derivatives needed for
/// reparameterized policy gradients (the pre-squash noise is held fixed).
#[derive(Debug, Clone)]
pub struct SquashedSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    /// d log_prob / d mean, per dimension.
    pub dlogp_dmean: Vec<f64>,
    /// d log_prob / d log_std, per dimension.
    pub dlogp_dlogstd: Vec<f64>,
    /// d action_i / d mean_i (the Jacobian is diagonal).
    pub daction_dmean: Vec<f64>,
    /// d action_i / d log_std_i.
    pub daction_dlogstd: Vec<f64>,
}

/// Draws `u ~ N(mean, std^2)`, squashes through tanh, and maps affinely into
/// `bounds`. With `deterministic` the noise is zero and the action is the
/// squashed mean.
pub fn squashed_gaussian_sample<R: Rng>(
    head: &GaussianHeadOutput,
    bounds: &Bounds,
    rng: &mut R,
    deterministic: bool,
) -> SquashedSample {
    let noise: Vec<f64> = if deterministic {
        vec![0.0; head.dim()]
    } else {
        (0..head.dim()).map(|_| rng.sample(StandardNormal)).collect()
    };
    squashed_sample_with_noise(head, bounds, &noise)
}

/// Deterministic core of [`squashed_gaussian_sample`]: applies the given
/// standard-normal noise vector.
///
/// The log-density is
/// `sum_i [ log N(u_i; mean_i, std_i) - log(1 - tanh(u_i)^2 + 1e-6)
///          - log((high_i - low_i) / 2) ]`.
pub fn squashed_sample_with_noise(
    head: &GaussianHeadOutput,
    bounds: &Bounds,
    noise: &[f64],
) -> SquashedSample {
    let d = head.dim();
    assert_eq!(bounds.dim(), d, "bounds/head width mismatch");
    assert_eq!(noise.len(), d, "noise width mismatch");
    let mut action = Vec::with_capacity(d);
    let mut log_prob = 0.0;
    let mut dlogp_dmean = Vec::with_capacity(d);
    let mut dlogp_dlogstd = Vec::with_capacity(d);
    let mut daction_dmean = Vec::with_capacity(d);
    let mut daction_dlogstd = Vec::with_capacity(d);
    for i in 0..d {
        let std = head.log_std[i].exp();
        let u = head.mean[i] + std * noise[i];
        let t = squash(u);
        let half_span = (bounds.high[i] - bounds.low[i]) / 2.0;
        action.push(bounds.low[i] + (t + 1.0) * half_span);
        log_prob += -head.log_std[i]
            - LN_SQRT_2PI
            - 0.5 * noise[i] * noise[i]
            - (1.0 - t * t + TANH_EPS).ln()
            - half_span.ln();
        let squash_term = 2.0 * t * (1.0 - t * t) / (1.0 - t * t + TANH_EPS);
        dlogp_dmean.push(squash_term);
        dlogp_dlogstd.push(-1.0 + squash_term * std * noise[i]);
        daction_dmean.push((1.0 - t * t) * half_span);
        daction_dlogstd.push((1.0 - t * t) * half_span * std * noise[i]);
    }
    SquashedSample {
        action,
        log_prob,
        dlogp_dmean,
        dlogp_dlogstd,
        daction_dmean,
        daction_dlogstd,
    }
}

/// Log-density of the action that pre-squash value `u` maps to, used by
/// density checks and by off-sample evaluation.
pub fn squashed_log_prob_of_u(head: &GaussianHeadOutput, bounds: &Bounds, u: &[f64]) -> f64 {
    let d = head.dim();
    assert_eq!(u.len(), d);
    assert_eq!(bounds.dim(), d);
    let mut log_prob = 0.0;
    for i in 0..d {
        let std = head.log_std[i].exp();
        let z = (u[i] - head.mean[i]) / std;
        let t = squash(u[i]);
        let half_span = (bounds.high[i] - bounds.low[i]) / 2.0;
        log_prob += -head.log_std[i]
            - LN_SQRT_2PI
            - 0.5 * z * z
            - (1.0 - t * t + TANH_EPS).ln()
            - half_span.ln();
    }
    log_prob
}

/// Fixed quantile fractions at bin midpoints: `tau_i = (2i - 1) / (2N)`.
pub fn midpoint_fractions(n: usize) -> Vec<f64> {
    assert!(n >= 1, "need at least one quantile");
    (1..=n).map(|i| (2 * i - 1) as f64 / (2 * n) as f64).collect()
}

fn huber(u: f64, kappa: f64) -> f64 {
    if u.abs() <= kappa {
        0.5 * u * u
    } else {
        kappa * (u.abs() - 0.5 * kappa)
    }
}

/// Quantile regression with a Huber kernel: the mean over all
/// `(prediction i, target j)` pairs of
/// `|tau_i - 1{u < 0}| * huber_kappa(u) / kappa` with `u = target_j - pred_i`.
pub fn quantile_huber_loss(pred: &[f64], taus: &[f64], targets: &[f64], kappa: f64) -> f64 {
    quantile_huber_loss_grad(pred, taus, targets, kappa).0
}

/// [`quantile_huber_loss`] together with its gradient in the predictions.
pub fn quantile_huber_loss_grad(
    pred: &[f64],
    taus: &[f64],
    targets: &[f64],
    kappa: f64,
) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), taus.len(), "one fraction per quantile");
    assert!(!pred.is_empty() && !targets.is_empty(), "empty quantile loss");
    assert!(kappa > 0.0, "kappa must be positive");
    let inv = 1.0 / (pred.len() * targets.len()) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for (i, (p, tau)) in pred.iter().zip(taus).enumerate() {
        for target in targets {
            let u = target - p;
            let weight = (tau - if u < 0.0 { 1.0 } else { 0.0 }).abs();
            loss += weight * huber(u, kappa) / kappa * inv;
            let dh_du = u.clamp(-kappa, kappa);
            grad[i] -= weight * dh_du / kappa * inv;
        }
    }
    (loss, grad)
}
