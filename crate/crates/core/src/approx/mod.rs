//! Function approximators and training primitives.
//!
//! The building block is a feed-forward [`Mlp`] with Mish hidden activations
//! and an identity output layer, stored as one flat `Vec<f64>` so optimizers
//! and checkpoints can treat parameters uniformly. Reverse-mode gradients are
//! hand-rolled and verified against central finite differences in the test
//! suite. [`heads`] adds the squashed-Gaussian policy head and the quantile
//! value head; [`adam`] provides the optimizer; [`checkpoint`] persists
//! trained models.

pub mod adam;
pub mod checkpoint;
pub mod heads;

pub use adam::Adam;

use crate::par;

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Self-gated activation `x * tanh(softplus(x))`.
pub fn mish(x: f64) -> f64 {
    x * softplus(x).tanh()
}

/// Derivative of [`mish`].
pub fn mish_prime(x: f64) -> f64 {
    let t = softplus(x).tanh();
    t + x * (1.0 - t * t) * sigmoid(x)
}

/// Shrink factor applied to a policy network's output layer at
/// initialization, keeping early predictions near zero.
pub const POLICY_OUTPUT_SCALE: f64 = 0.01;

/// Shape of an [`Mlp`]: an affine chain `input -> hidden... -> output` with
/// Mish after every hidden layer and identity on the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArch {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

/// The policy shape every agent family shares: stacked-window input, two
/// outputs per action dimension (mean, then log-std).
pub fn policy_arch(obs_dim: usize, action_dim: usize, hidden: &[usize]) -> MlpArch {
    MlpArch::new(obs_dim, hidden.to_vec(), 2 * action_dim)
}

/// Fingerprint of an architecture, for asserting two networks share a shape.
pub fn arch_fingerprint(arch: &MlpArch) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    arch.input.hash(&mut h);
    arch.hidden.hash(&mut h);
    arch.output.hash(&mut h);
    h.finish()
}

impl MlpArch {
    pub fn new(input: usize, hidden: Vec<usize>, output: usize) -> Self {
        assert!(input >= 1 && output >= 1, "degenerate architecture");
        assert!(hidden.iter().all(|w| *w >= 1), "zero-width hidden layer");
        Self { input, hidden, output }
    }

    /// `(fan_in, fan_out)` of every affine layer, in order.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input);
        widths.extend_from_slice(&self.hidden);
        widths.push(self.output);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|(fi, fo)| fi * fo + fo)
            .sum()
    }
}

/// A feed-forward network over a flat parameter buffer.
///
/// Layout: for each affine layer in order, the weight matrix row-major
/// (`fan_out` rows of `fan_in`) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    arch: MlpArch,
    params: Vec<f64>,
}

/// Cached layer inputs and pre-activations from [`Mlp::forward_trace`],
/// consumed by [`Mlp::backward`].
pub struct ForwardTrace {
    layer_inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Result of one reverse-mode sweep.
pub struct Gradients {
    /// Loss gradient congruent with the flat parameter buffer.
    pub dparams: Vec<f64>,
    /// Loss gradient with respect to the network input.
    pub dinput: Vec<f64>,
}

impl Mlp {
    /// All-zero parameters (useful for tests and as an optimizer-state shape).
    pub fn zeroed(arch: MlpArch) -> Self {
        let n = arch.param_count();
        Self { arch, params: vec![0.0; n] }
    }

    /// Fan-in uniform initialization: every weight and bias of a layer with
    /// `fan_in` inputs is drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init<R: rand::Rng>(arch: MlpArch, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(arch.param_count());
        for (fan_in, fan_out) in arch.layer_dims() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out + fan_out {
                params.push(rng.gen_range(-bound..bound));
            }
        }
        Self { arch, params }
    }

    /// Rebuilds a network from a flat buffer, validating length and finiteness.
    pub fn from_params(arch: MlpArch, params: Vec<f64>) -> Self {
        assert_eq!(params.len(), arch.param_count(), "parameter buffer length");
        assert!(params.iter().all(|p| p.is_finite()), "non-finite parameter");
        Self { arch, params }
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Multiplies the final affine layer (weights and bias) by `factor`.
    ///
    /// Scaling the policy output layer down makes initial predictions close
    /// to zero, so an untrained forward model starts near the identity map.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let dims = self.arch.layer_dims();
        let (fi, fo) = *dims.last().expect("at least one layer");
        let tail = fi * fo + fo;
        let start = self.params.len() - tail;
        for p in &mut self.params[start..] {
            *p *= factor;
        }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_trace(input).output
    }

    /// Forward pass that caches everything [`Mlp::backward`] needs.
    pub fn forward_trace(&self, input: &[f64]) -> ForwardTrace {
        assert_eq!(input.len(), self.arch.input, "input width mismatch");
        let dims = self.arch.layer_dims();
        let n_layers = dims.len();
        let mut layer_inputs = Vec::with_capacity(n_layers);
        let mut pre_activations = Vec::with_capacity(n_layers);
        let mut a = input.to_vec();
        let mut offset = 0;
        for (l, (fan_in, fan_out)) in dims.iter().enumerate() {
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let mut z = Vec::with_capacity(*fan_out);
            for o in 0..*fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let mut acc = b[o];
                for (wi, ai) in row.iter().zip(&a) {
                    acc += wi * ai;
                }
                z.push(acc);
            }
            layer_inputs.push(a);
            let last = l == n_layers - 1;
            a = if last { z.clone() } else { z.iter().map(|v| mish(*v)).collect() };
            pre_activations.push(z);
        }
        ForwardTrace { layer_inputs, pre_activations, output: a }
    }

    /// Reverse-mode sweep: given `dloss/doutput`, returns gradients for all
    /// parameters and for the input vector.
    pub fn backward(&self, trace: &ForwardTrace, dloss_doutput: &[f64]) -> Gradients {
        assert_eq!(dloss_doutput.len(), self.arch.output, "output width mismatch");
        let dims = self.arch.layer_dims();
        let mut dparams = vec![0.0; self.params.len()];
        let layer_offsets: Vec<usize> = {
            let mut offs = Vec::with_capacity(dims.len());
            let mut o = 0;
            for (fi, fo) in &dims {
                offs.push(o);
                o += fi * fo + fo;
            }
            offs
        };
        let mut gz = dloss_doutput.to_vec();
        for l in (0..dims.len()).rev() {
            let (fan_in, fan_out) = dims[l];
            let off = layer_offsets[l];
            let a_prev = &trace.layer_inputs[l];
            {
                let (wslot, bslot) =
                    dparams[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for o in 0..fan_out {
                    let g = gz[o];
                    bslot[o] = g;
                    let row = &mut wslot[o * fan_in..(o + 1) * fan_in];
                    for (slot, ai) in row.iter_mut().zip(a_prev) {
                        *slot = g * ai;
                    }
                }
            }
            let w = &self.params[off..off + fan_in * fan_out];
            let mut ga_prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let g = gz[o];
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (slot, wi) in ga_prev.iter_mut().zip(row) {
                    *slot += g * wi;
                }
            }
            if l > 0 {
                let z_prev = &trace.pre_activations[l - 1];
                gz = ga_prev
                    .iter()
                    .zip(z_prev)
                    .map(|(g, z)| g * mish_prime(*z))
                    .collect();
            } else {
                return Gradients { dparams, dinput: ga_prev };
            }
        }
        unreachable!("architectures always have at least one layer");
    }
}

/// Mean loss and mean parameter gradient over a batch.
#[derive(Debug)]
pub struct BatchGrad {
    pub mean_loss: f64,
    pub grad: Vec<f64>,
}

/// A batch item produced a loss that is not a finite number.
#[derive(Debug, thiserror::Error)]
#[error("non-finite loss {loss} at batch item {index}")]
pub struct TrainingFault {
    pub index: usize,
    pub loss: f64,
}

/// Averages per-sample losses and gradients over a batch.
///
/// `input_of(i)` yields the i-th network input; `loss_of(i, output)` returns
/// the per-sample loss and `dloss/doutput`. Samples are processed with the
/// order-stable chunked reduction from [`par`], so results are bit-identical
/// with and without the `parallel` feature.
pub fn batch_grad<I, L>(
    mlp: &Mlp,
    n: usize,
    input_of: I,
    loss_of: L,
) -> Result<BatchGrad, TrainingFault>
where
    I: Fn(usize) -> Vec<f64> + Sync,
    L: Fn(usize, &[f64]) -> (f64, Vec<f64>) + Sync,
{
    assert!(n > 0, "empty batch");
    let p = mlp.arch.param_count();
    let acc = par::sum_vec_over(n, p + 2, |i| {
        let trace = mlp.forward_trace(&input_of(i));
        let (loss, dout) = loss_of(i, &trace.output);
        let grads = mlp.backward(&trace, &dout);
        let mut row = grads.dparams;
        row.push(loss);
        row.push(if loss.is_finite() { 0.0 } else { 1.0 });
        row
    });
    if acc[p + 1] > 0.0 {
        for i in 0..n {
            let trace = mlp.forward_trace(&input_of(i));
            let (loss, _) = loss_of(i, &trace.output);
            if !loss.is_finite() {
                return Err(TrainingFault { index: i, loss });
            }
        }
    }
    let inv = 1.0 / n as f64;
    Ok(BatchGrad {
        mean_loss: acc[p] * inv,
        grad: acc[..p].iter().map(|g| g * inv).collect(),
    })
}
