//! Small fully-connected classifier with explicit forward and backward
//! passes and a classical SGD-with-momentum update.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::fmath;
use crate::numerics::Matrix;
use crate::rng::{stream, Rng};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Activation> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => tanh(z),
        }
    }

    /// Derivative expressed from the pre-activation `z`.
    #[inline]
    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = tanh(z);
                1.0 - t * t
            }
        }
    }
}

#[inline]
fn tanh(z: f64) -> f64 {
    // tanh(z) = 1 - 2 / (e^{2z} + 1), stable for large |z|.
    if z >= 0.0 {
        let e = fmath::exp(-2.0 * z);
        (1.0 - e) / (1.0 + e)
    } else {
        let e = fmath::exp(2.0 * z);
        (e - 1.0) / (e + 1.0)
    }
}

/// Layer shape description of an MLP classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpArch {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, activation: Activation) -> Self {
        MlpArch { input_dim, hidden, output_dim, activation }
    }

    /// Layer (fan_in, fan_out) pairs, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidParameter { name: "arch", reason: "all dims must be >= 1" });
        }
        Ok(())
    }
}

/// An MLP with per-layer weight matrices (fan_out x fan_in) and bias vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub arch: MlpArch,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub init_seed: u64,
}

/// Per-layer pre-activations and activations for one batch, kept for the
/// backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input batch (batch x input_dim).
    inputs: Matrix,
    /// Pre-activations per layer (batch x fan_out).
    pre_activations: Vec<Matrix>,
    /// Post-activation outputs per hidden layer (batch x fan_out).
    hidden_activations: Vec<Matrix>,
}

/// Per-layer gradients, summed over the batch.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Gradients {
        Gradients {
            weights: model.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone)]
pub struct Velocity {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Velocity {
    pub fn zeros_like(model: &MlpModel) -> Velocity {
        Velocity {
            weights: model.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

/// Seeded Gaussian initialization: He scaling (`sqrt(2 / fan_in)`) for relu,
/// Xavier scaling (`sqrt(2 / (fan_in + fan_out))`) for tanh. Biases start at
/// zero.
pub fn init_mlp(arch: &MlpArch, seed: u64) -> Result<MlpModel> {
    arch.validate()?;
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (l, (fan_in, fan_out)) in arch.layer_dims().into_iter().enumerate() {
        let std = match arch.activation {
            Activation::Relu => fmath::sqrt(2.0 / fan_in as f64),
            Activation::Tanh => fmath::sqrt(2.0 / (fan_in + fan_out) as f64),
        };
        let mut rng = Rng::new(seed, stream::init_layer(l));
        let mut w = Matrix::zeros(fan_out, fan_in);
        for r in 0..fan_out {
            for c in 0..fan_in {
                w.set(r, c, std * rng.next_gaussian());
            }
        }
        weights.push(w);
        biases.push(vec![0.0; fan_out]);
    }
    Ok(MlpModel { arch: arch.clone(), weights, biases, init_seed: seed })
}

/// Forward pass over a batch; returns raw logits (batch x C) and the cache
/// needed by [`backward`].
pub fn forward(model: &MlpModel, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
    if batch.cols() != model.arch.input_dim {
        return Err(Error::DimensionMismatch {
            context: "forward input",
            expected: model.arch.input_dim,
            got: batch.cols(),
        });
    }
    let num_layers = model.arch.num_layers();
    let mut pre_activations = Vec::with_capacity(num_layers);
    let mut hidden_activations = Vec::with_capacity(num_layers.saturating_sub(1));
    let mut current = batch.clone();
    for (l, (w, b)) in model.weights.iter().zip(&model.biases).enumerate() {
        let mut z = current.matmul_transpose(w)?;
        for r in 0..z.rows() {
            let row = z.row_mut(r);
            for (v, bias) in row.iter_mut().zip(b) {
                *v += bias;
            }
        }
        pre_activations.push(z.clone());
        if l + 1 < num_layers {
            let mut a = z;
            for r in 0..a.rows() {
                for v in a.row_mut(r) {
                    *v = model.arch.activation.apply(*v);
                }
            }
            hidden_activations.push(a.clone());
            current = a;
        } else {
            current = z;
        }
    }
    let cache = ForwardCache { inputs: batch.clone(), pre_activations, hidden_activations };
    Ok((current, cache))
}

/// Logits for a single feature vector.
pub fn forward_single(model: &MlpModel, features: &[f64]) -> Result<Vec<f64>> {
    let batch = Matrix::from_rows(&[features.to_vec()])?;
    let (logits, _) = forward(model, &batch)?;
    Ok(logits.row(0).to_vec())
}

/// Backpropagates `dlogits` (batch x C) through the cached forward pass.
///
/// Returns exact analytic gradients of the scalar loss whose per-logit
/// gradient is `dlogits`, summed over the batch. Mean-over-batch reduction
/// is the caller's job (scale `dlogits` by `1 / batch`).
pub fn backward(model: &MlpModel, cache: &ForwardCache, dlogits: &Matrix) -> Result<Gradients> {
    let num_layers = model.arch.num_layers();
    let last = &cache.pre_activations[num_layers - 1];
    if dlogits.rows() != last.rows() || dlogits.cols() != last.cols() {
        return Err(Error::DimensionMismatch {
            context: "backward dlogits",
            expected: last.rows() * last.cols(),
            got: dlogits.rows() * dlogits.cols(),
        });
    }
    let mut grads = Gradients::zeros_like(model);
    let mut delta = dlogits.clone();
    for l in (0..num_layers).rev() {
        let prev_activation: &Matrix =
            if l == 0 { &cache.inputs } else { &cache.hidden_activations[l - 1] };
        // dW[l] = delta^T . prev_activation, db[l] = column sums of delta.
        let gw = &mut grads.weights[l];
        let gb = &mut grads.biases[l];
        for r in 0..delta.rows() {
            let drow = delta.row(r);
            let arow = prev_activation.row(r);
            for (j, &dj) in drow.iter().enumerate() {
                gb[j] += dj;
                for (k, &ak) in arow.iter().enumerate() {
                    let v = gw.get(j, k) + dj * ak;
                    gw.set(j, k, v);
                }
            }
        }
        if l > 0 {
            // delta_prev = (delta . W[l]) * act'(z[l-1])
            let mut next = delta.matmul(&model.weights[l])?;
            let z_prev = &cache.pre_activations[l - 1];
            for r in 0..next.rows() {
                let zrow = z_prev.row(r);
                for (v, &z) in next.row_mut(r).iter_mut().zip(zrow) {
                    *v *= model.arch.activation.derivative(z);
                }
            }
            delta = next;
        }
    }
    Ok(grads)
}

/// Classical momentum update: `v <- momentum * v + g; theta <- theta - lr * v`.
pub fn sgd_momentum_step(
    model: &mut MlpModel,
    grads: &Gradients,
    velocity: &mut Velocity,
    lr: f64,
    momentum: f64,
) {
    for l in 0..model.weights.len() {
        let w = &mut model.weights[l];
        let vw = &mut velocity.weights[l];
        let gw = &grads.weights[l];
        for r in 0..w.rows() {
            for c in 0..w.cols() {
                let v = momentum * vw.get(r, c) + gw.get(r, c);
                vw.set(r, c, v);
                w.set(r, c, w.get(r, c) - lr * v);
            }
        }
        let b = &mut model.biases[l];
        let vb = &mut velocity.biases[l];
        let gb = &grads.biases[l];
        for i in 0..b.len() {
            vb[i] = momentum * vb[i] + gb[i];
            b[i] -= lr * vb[i];
        }
    }
}

/// Logits and argmax predictions over a dataset, in dataset order.
///
/// Ties break toward the lowest class index so predictions are deterministic.
pub fn predict_logits(model: &MlpModel, ds: &LabeledDataset) -> Result<(Matrix, Vec<usize>)> {
    let rows: Vec<Vec<f64>> = ds.samples.iter().map(|s| s.features.clone()).collect();
    let batch = Matrix::from_rows(&rows)?;
    let (logits, _) = forward(model, &batch)?;
    let preds = (0..logits.rows()).map(|r| argmax(logits.row(r))).collect();
    Ok((logits, preds))
}

/// Index of the largest element; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Order-sensitive FNV-1a hash over all parameters' bit patterns.
///
/// Lets tests assert that a teacher served a whole training run unchanged.
pub fn param_hash(model: &MlpModel) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bits: u64| {
        for byte in bits.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for w in &model.weights {
        for &v in w.data() {
            eat(v.to_bits());
        }
    }
    for b in &model.biases {
        for &v in b {
            eat(v.to_bits());
        }
    }
    h
}

/// Human-readable architecture tag, e.g. `mlp(2-16-16-3,relu)`.
pub fn arch_tag(arch: &MlpArch) -> String {
    use core::fmt::Write;
    let mut s = String::from("mlp(");
    let _ = write!(s, "{}", arch.input_dim);
    for h in &arch.hidden {
        let _ = write!(s, "-{h}");
    }
    let _ = write!(s, "-{},{})", arch.output_dim, arch.activation.name());
    s
}
