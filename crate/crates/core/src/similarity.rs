//! Trajectory losses and similarity scores.
//!
//! Everything here compares two equally shaped trajectories: the logged one
//! and a bootstrapped prediction. [`rollout_loss`] and [`rmse_rollout_metric`]
//! are plain error magnitudes, [`z_e`] is the composite divergence used as a
//! reward signal at rollout boundaries, and [`simplified_similarity`] is a
//! bounded three-view score (time, frequency, power) for sparse rewards.
//!
//! All functions are pure and thread-safe.

/// A `[T timesteps × D dims]` matrix of real state values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    timesteps: usize,
    dims: usize,
    values: Vec<f64>,
}

impl Trajectory {
    /// Builds a trajectory from row-major values.
    ///
    /// Panics when the length is not `timesteps * dims`, when `timesteps`
    /// is zero, or when a value is not finite.
    pub fn new(timesteps: usize, dims: usize, values: Vec<f64>) -> Self {
        assert!(timesteps >= 1, "trajectory needs at least one timestep");
        assert!(dims >= 1, "trajectory needs at least one dimension");
        assert_eq!(
            values.len(),
            timesteps * dims,
            "value buffer does not match timesteps * dims"
        );
        assert!(
            values.iter().all(|v| v.is_finite()),
            "trajectory values must be finite"
        );
        Self { timesteps, dims, values }
    }

    /// Builds a trajectory from per-timestep state slices.
    pub fn from_states(states: &[Vec<f64>]) -> Self {
        assert!(!states.is_empty(), "trajectory needs at least one timestep");
        let dims = states[0].len();
        let mut values = Vec::with_capacity(states.len() * dims);
        for s in states {
            assert_eq!(s.len(), dims, "ragged state rows");
            values.extend_from_slice(s);
        }
        Self::new(states.len(), dims, values)
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// The state at timestep `t`.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dims..(t + 1) * self.dims]
    }

    fn at(&self, t: usize, d: usize) -> f64 {
        self.values[t * self.dims + d]
    }

    fn assert_same_shape(&self, other: &Self) {
        assert_eq!(
            (self.timesteps, self.dims),
            (other.timesteps, other.dims),
            "trajectory shape mismatch"
        );
    }
}

/// Sum over timesteps of the Euclidean norm of the per-step difference.
pub fn rollout_loss(y: &Trajectory, yhat: &Trajectory) -> f64 {
    y.assert_same_shape(yhat);
    (0..y.timesteps)
        .map(|t| euclidean_distance(y.row(t), yhat.row(t)))
        .sum()
}

/// Euclidean distance between two equally sized state vectors.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "state length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Composite trajectory divergence: the product
/// `(1 + L2) * (1 + corr) * (1 + KL)` where
///
/// - `L2` is the sum of squared errors over all steps and dims,
/// - `corr` is one minus the Pearson correlation between the flattened
///   forward first differences of the two trajectories, and
/// - `KL` converts each dimension's time series to a probability vector via
///   softmax over time and sums `KL(p_y ‖ p_yhat)` over dims.
///
/// Always `>= 1`, with equality exactly when all three distances vanish;
/// `z_e(y, y) == 1.0` holds bit-exactly. The KL factor makes the measure
/// asymmetric in its arguments.
///
/// Degenerate correlation conventions: when both difference sequences have
/// zero variance the corr distance is 0, when exactly one does it is 1, and
/// `T < 2` (no differences at all) counts as both-constant.
pub fn z_e(y: &Trajectory, yhat: &Trajectory) -> f64 {
    y.assert_same_shape(yhat);
    let l2: f64 = y
        .values
        .iter()
        .zip(&yhat.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let corr = derivative_correlation_distance(y, yhat);
    let mut kl = 0.0;
    for d in 0..y.dims {
        let p = softmax_over_time(y, d);
        let q = softmax_over_time(yhat, d);
        kl += p
            .iter()
            .zip(&q)
            .map(|(pi, qi)| pi * (pi / qi).ln())
            .sum::<f64>();
    }
    (1.0 + l2) * (1.0 + corr) * (1.0 + kl)
}

fn derivative_correlation_distance(y: &Trajectory, yhat: &Trajectory) -> f64 {
    if y.timesteps < 2 {
        return 0.0;
    }
    let dy = first_differences(y);
    let dyhat = first_differences(yhat);
    match pearson(&dy, &dyhat) {
        Some(r) => 1.0 - r,
        None => {
            let flat = |v: &[f64]| v.iter().all(|x| *x == v[0]);
            if flat(&dy) == flat(&dyhat) {
                0.0
            } else {
                1.0
            }
        }
    }
}

fn first_differences(tr: &Trajectory) -> Vec<f64> {
    let mut out = Vec::with_capacity((tr.timesteps - 1) * tr.dims);
    for t in 0..tr.timesteps - 1 {
        for d in 0..tr.dims {
            out.push(tr.at(t + 1, d) - tr.at(t, d));
        }
    }
    out
}

/// Pearson correlation of two equal-length samples, or `None` when either
/// sample has zero variance.
fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

fn softmax_over_time(tr: &Trajectory, d: usize) -> Vec<f64> {
    let column: Vec<f64> = (0..tr.timesteps).map(|t| tr.at(t, d)).collect();
    let max = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = column.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Bounded similarity in `[0, 1]`: the mean of three sub-scores,
///
/// - time domain: `1 / (1 + rmse(y, yhat))`,
/// - frequency domain: `1 / (1 + rmse(|DFT y|, |DFT yhat|))` over
///   per-dimension full-length magnitude spectra, and
/// - power domain: `1 / (1 + Σ_d |var(y_d) − var(yhat_d)|)` with population
///   variances.
///
/// Returns 1 exactly when the trajectories agree under all three views.
pub fn simplified_similarity(y: &Trajectory, yhat: &Trajectory) -> f64 {
    y.assert_same_shape(yhat);
    let time_score = 1.0 / (1.0 + rmse_rollout_metric(y, yhat));

    let my = magnitude_spectra(y);
    let myhat = magnitude_spectra(yhat);
    let freq_rmse = {
        let n = my.len() as f64;
        let sse: f64 = my
            .iter()
            .zip(&myhat)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (sse / n).sqrt()
    };
    let freq_score = 1.0 / (1.0 + freq_rmse);

    let mut var_gap = 0.0;
    for d in 0..y.dims {
        var_gap += (column_variance(y, d) - column_variance(yhat, d)).abs();
    }
    let power_score = 1.0 / (1.0 + var_gap);

    (time_score + freq_score + power_score) / 3.0
}

/// Magnitude of the length-`T` discrete Fourier transform of every
/// dimension, flattened dimension-major.
fn magnitude_spectra(tr: &Trajectory) -> Vec<f64> {
    let t_len = tr.timesteps;
    let mut out = Vec::with_capacity(t_len * tr.dims);
    for d in 0..tr.dims {
        for k in 0..t_len {
            let mut re = 0.0;
            let mut im = 0.0;
            for t in 0..t_len {
                let angle = -2.0 * std::f64::consts::PI * (k * t) as f64 / t_len as f64;
                let v = tr.at(t, d);
                re += v * angle.cos();
                im += v * angle.sin();
            }
            out.push((re * re + im * im).sqrt());
        }
    }
    out
}

fn column_variance(tr: &Trajectory, d: usize) -> f64 {
    let n = tr.timesteps as f64;
    let mean = (0..tr.timesteps).map(|t| tr.at(t, d)).sum::<f64>() / n;
    (0..tr.timesteps)
        .map(|t| {
            let c = tr.at(t, d) - mean;
            c * c
        })
        .sum::<f64>()
        / n
}

/// Root mean squared error over all `T * D` entries.
pub fn rmse_rollout_metric(y: &Trajectory, yhat: &Trajectory) -> f64 {
    y.assert_same_shape(yhat);
    let n = y.values.len() as f64;
    let sse: f64 = y
        .values
        .iter()
        .zip(&yhat.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (sse / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(rows: &[&[f64]]) -> Trajectory {
        Trajectory::from_states(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    #[test]
    fn rollout_loss_identity_is_zero() {
        let y = traj(&[&[0.3, -1.2], &[0.9, 2.0]]);
        assert_eq!(rollout_loss(&y, &y), 0.0);
    }

    #[test]
    fn rollout_loss_hand_example() {
        let y = traj(&[&[0.0], &[0.0]]);
        let yhat = traj(&[&[1.0], &[1.0]]);
        assert_eq!(rollout_loss(&y, &yhat), 2.0);
    }

    #[test]
    fn z_e_identity_is_exactly_one() {
        let y = traj(&[&[0.1, 2.0], &[-3.0, 0.5], &[4.0, 4.0]]);
        assert_eq!(z_e(&y, &y), 1.0);
    }

    #[test]
    fn z_e_hand_example_is_three() {
        let y = traj(&[&[0.0], &[0.0]]);
        let yhat = traj(&[&[1.0], &[1.0]]);
        assert!((z_e(&y, &yhat) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn z_e_single_timestep_skips_derivative_term() {
        let y = traj(&[&[1.0, 2.0]]);
        let yhat = traj(&[&[2.0, 2.0]]);
        // L2 = 1; corr treated as both-constant = 0; softmax over a single
        // timestep is the point mass [1.0] for both, so KL = 0.
        assert!((z_e(&y, &yhat) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn z_e_one_constant_difference_sequence_scores_unit_corr_distance() {
        // dy = [0, 0] (constant), dyhat = [1, -1] (not), so corr distance 1.
        let y = traj(&[&[5.0], &[5.0], &[5.0]]);
        let yhat = traj(&[&[5.0], &[6.0], &[5.0]]);
        let v = z_e(&y, &yhat);
        let l2 = 1.0;
        let corr = 1.0;
        // softmax(y) is uniform; softmax(yhat) = softmax([0,1,0]).
        let z = 2.0 + 1.0f64.exp();
        let q = [1.0 / z, 1.0f64.exp() / z, 1.0 / z];
        let kl: f64 = q.iter().map(|qi| (1.0_f64 / 3.0) * ((1.0 / 3.0) / qi).ln()).sum();
        let want = (1.0 + l2) * (1.0 + corr) * (1.0 + kl);
        assert!((v - want).abs() < 1e-12, "got {v}, want {want}");
    }

    #[test]
    fn z_e_is_asymmetric_on_witness_pair() {
        let a = traj(&[&[0.0], &[2.0], &[0.0]]);
        let b = traj(&[&[1.0], &[0.0], &[0.0]]);
        let ab = z_e(&a, &b);
        let ba = z_e(&b, &a);
        assert!(
            (ab - ba).abs() > 1e-3,
            "KL factor should break symmetry: {ab} vs {ba}"
        );
    }

    #[test]
    fn simplified_similarity_identity_is_one() {
        let y = traj(&[&[0.5, 1.0], &[-0.5, 2.0], &[0.0, 3.0]]);
        assert_eq!(simplified_similarity(&y, &y), 1.0);
    }

    #[test]
    fn constant_offset_moves_only_time_and_power_views() {
        // A constant offset changes the DFT in bin 0 only; comparing the
        // non-zero bins directly shows the shift property.
        let y = traj(&[&[0.0], &[1.0], &[0.0], &[-1.0]]);
        let rows: Vec<Vec<f64>> = (0..4).map(|t| vec![y.at(t, 0) + 100.0]) .collect();
        let yhat = Trajectory::from_states(&rows);
        let my = magnitude_spectra(&y);
        let myhat = magnitude_spectra(&yhat);
        for k in 1..4 {
            assert!(
                (my[k] - myhat[k]).abs() < 1e-9,
                "bin {k}: {} vs {}",
                my[k],
                myhat[k]
            );
        }
        assert!((my[0] - myhat[0]).abs() > 100.0);
        let score = simplified_similarity(&y, &yhat);
        assert!(score < 1.0);
    }

    /// Frozen output of the independent evaluator in
    /// `sine_versus_zeros_golden` below.
    const SINE_VS_ZEROS_GOLDEN: f64 = 0.46755806970530217;

    #[test]
    fn sine_versus_zeros_golden() {
        let t_len = 64usize;
        let sine: Vec<Vec<f64>> = (0..t_len)
            .map(|t| vec![(2.0 * std::f64::consts::PI * t as f64 / t_len as f64).sin()])
            .collect();
        let zeros: Vec<Vec<f64>> = (0..t_len).map(|_| vec![0.0]).collect();
        let got = simplified_similarity(
            &Trajectory::from_states(&sine),
            &Trajectory::from_states(&zeros),
        );

        // Straight-line re-evaluation of the documented formula, written
        // independently of the library code above.
        let xs: Vec<f64> = sine.iter().map(|r| r[0]).collect();
        let time = {
            let sse: f64 = xs.iter().map(|v| v * v).sum();
            1.0 / (1.0 + (sse / t_len as f64).sqrt())
        };
        let freq = {
            let mut sse = 0.0;
            for k in 0..t_len {
                let mut re = 0.0;
                let mut im = 0.0;
                for (t, v) in xs.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / t_len as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                let mag = (re * re + im * im).sqrt();
                sse += mag * mag;
            }
            1.0 / (1.0 + (sse / t_len as f64).sqrt())
        };
        let power = {
            let mean = xs.iter().sum::<f64>() / t_len as f64;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t_len as f64;
            1.0 / (1.0 + var)
        };
        let oracle = (time + freq + power) / 3.0;

        assert!((got - oracle).abs() < 1e-12, "library {got} vs oracle {oracle}");
        assert!(
            (got - SINE_VS_ZEROS_GOLDEN).abs() < 1e-12,
            "library {got} vs frozen {SINE_VS_ZEROS_GOLDEN}"
        );
    }

    #[test]
    fn rmse_hand_example() {
        let y = traj(&[&[0.0, 0.0]]);
        let yhat = traj(&[&[3.0, 4.0]]);
        assert!((rmse_rollout_metric(&y, &yhat) - 12.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rmse_is_permutation_invariant_in_time() {
        let y = traj(&[&[1.0], &[4.0], &[9.0]]);
        let yhat = traj(&[&[0.0], &[5.0], &[7.0]]);
        let yp = traj(&[&[9.0], &[1.0], &[4.0]]);
        let yhatp = traj(&[&[7.0], &[0.0], &[5.0]]);
        assert!(
            (rmse_rollout_metric(&y, &yhat) - rmse_rollout_metric(&yp, &yhatp)).abs() < 1e-15
        );
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn shape_mismatch_panics() {
        let y = traj(&[&[0.0], &[0.0]]);
        let yhat = traj(&[&[0.0]]);
        rollout_loss(&y, &yhat);
    }

    fn arb_pair(max_t: usize, max_d: usize) -> impl Strategy<Value = (Trajectory, Trajectory)> {
        (1..=max_t, 1..=max_d).prop_flat_map(|(t, d)| {
            let cell = -50.0..50.0f64;
            (
                proptest::collection::vec(cell.clone(), t * d),
                proptest::collection::vec(cell, t * d),
            )
                .prop_map(move |(a, b)| {
                    (Trajectory::new(t, d, a), Trajectory::new(t, d, b))
                })
        })
    }

    proptest! {
        #[test]
        fn z_e_at_least_one_and_finite((y, yhat) in arb_pair(12, 3)) {
            let v = z_e(&y, &yhat);
            prop_assert!(v.is_finite());
            prop_assert!(v >= 1.0 - 1e-12, "z_e = {v}");
        }

        #[test]
        fn z_e_self_is_one(y in arb_pair(12, 3).prop_map(|(a, _)| a)) {
            prop_assert_eq!(z_e(&y, &y), 1.0);
        }

        #[test]
        fn simplified_similarity_in_unit_interval((y, yhat) in arb_pair(12, 3)) {
            let v = simplified_similarity(&y, &yhat);
            prop_assert!(v.is_finite());
            prop_assert!((0.0..=1.0).contains(&v), "score = {v}");
        }

        #[test]
        fn symmetric_measures((y, yhat) in arb_pair(10, 3)) {
            prop_assert_eq!(rollout_loss(&y, &yhat), rollout_loss(&yhat, &y));
            prop_assert_eq!(
                rmse_rollout_metric(&y, &yhat),
                rmse_rollout_metric(&yhat, &y)
            );
        }

        #[test]
        fn rollout_loss_triangle_bound((y, yhat) in arb_pair(8, 2), z_data in proptest::collection::vec(-50.0..50.0f64, 16)) {
            let (t, d) = (y.timesteps(), y.dims());
            if z_data.len() >= t * d {
                let z = Trajectory::new(t, d, z_data[..t * d].to_vec());
                let direct = rollout_loss(&y, &yhat);
                let via = rollout_loss(&y, &z) + rollout_loss(&z, &yhat);
                prop_assert!(direct <= via + 1e-9);
            }
        }

        #[test]
        fn rollout_loss_nonnegative((y, yhat) in arb_pair(10, 3)) {
            prop_assert!(rollout_loss(&y, &yhat) >= 0.0);
        }
    }
}
