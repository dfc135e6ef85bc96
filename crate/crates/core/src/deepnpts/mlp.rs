use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::SamplingDistribution;

/// How raw network outputs become probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Normalization {
    Softmax,
    /// Rectify, then divide by the sum. All-zero outputs give a uniform
    /// distribution.
    SumNormalize,
}

/// The four parameter tensors of the network. Also used for gradients and
/// optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    /// `hidden x input`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `output x hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Tensors {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; output * hidden],
            b2: vec![0.0; output],
        }
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add_assign(&mut self, other: &Tensors) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Weights of the two-layer network: affine, rectifier, affine, normalize.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParameters {
    pub input_dim: usize,
    pub hidden: usize,
    pub output: usize,
    pub normalization: Normalization,
    pub tensors: Tensors,
}

impl MlpParameters {
    pub fn zeros(
        input_dim: usize,
        hidden: usize,
        output: usize,
        normalization: Normalization,
    ) -> Self {
        Self {
            input_dim,
            hidden,
            output,
            normalization,
            tensors: Tensors::zeros(input_dim, hidden, output),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        output: usize,
        normalization: Normalization,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(input_dim, hidden, output, normalization);
        let a1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        p.tensors
            .w1
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-a1..a1));
        let a2 = (6.0 / (hidden + output) as f64).sqrt();
        p.tensors
            .w2
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-a2..a2));
        p
    }
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct Activations {
    pub hidden_pre: Vec<f64>,
    /// Rectified and (when training) dropout-masked hidden units.
    pub hidden: Vec<f64>,
    pub outputs: Vec<f64>,
    pub probs: Vec<f64>,
    /// Sum-normalize fell back to uniform.
    pub degenerate: bool,
}

fn affine(weights: &[f64], bias: &[f64], x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(
        weights
            .chunks_exact(x.len())
            .zip(bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()),
    );
}

/// Full forward pass. `mask`, when given, multiplies the rectified hidden
/// units (inverted dropout).
pub fn forward_pass(
    params: &MlpParameters,
    input: &[f64],
    mask: Option<&[f64]>,
) -> Result<Activations> {
    if input.len() != params.input_dim {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim,
            got: input.len(),
        });
    }
    let t = &params.tensors;
    let mut hidden_pre = Vec::with_capacity(params.hidden);
    affine(&t.w1, &t.b1, input, &mut hidden_pre);
    if hidden_pre.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hidden layer"));
    }
    let mut hidden: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();
    if let Some(mask) = mask {
        hidden.iter_mut().zip(mask).for_each(|(h, m)| *h *= m);
    }
    let mut outputs = Vec::with_capacity(params.output);
    affine(&t.w2, &t.b2, &hidden, &mut outputs);
    if outputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("output layer"));
    }
    let (probs, degenerate) = normalize(params.normalization, &outputs);
    Ok(Activations {
        hidden_pre,
        hidden,
        outputs,
        probs,
        degenerate,
    })
}

fn normalize(mode: Normalization, outputs: &[f64]) -> (Vec<f64>, bool) {
    let n = outputs.len();
    match mode {
        Normalization::Softmax => {
            let max = outputs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = outputs.iter().map(|o| (o - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            (exps.into_iter().map(|e| e / total).collect(), false)
        }
        Normalization::SumNormalize => {
            let total: f64 = outputs.iter().map(|o| o.max(0.0)).sum();
            if total > 0.0 {
                (outputs.iter().map(|o| o.max(0.0) / total).collect(), false)
            } else {
                (vec![1.0 / n as f64; n], true)
            }
        }
    }
}

/// Sampling distribution produced by the network for one input vector.
pub fn forward(params: &MlpParameters, input: &[f64]) -> Result<SamplingDistribution> {
    let acts = forward_pass(params, input, None)?;
    SamplingDistribution::new(acts.probs)
}

/// Accumulate into `grads` the gradient of a loss whose derivative with
/// respect to the output probabilities is `dprobs`.
pub fn backward(
    params: &MlpParameters,
    input: &[f64],
    acts: &Activations,
    mask: Option<&[f64]>,
    dprobs: &[f64],
    grads: &mut Tensors,
) {
    if acts.degenerate {
        return;
    }
    let q = &acts.probs;
    let mean: f64 = q.iter().zip(dprobs).map(|(p, d)| p * d).sum();
    let doutputs: Vec<f64> = match params.normalization {
        Normalization::Softmax => q.iter().zip(dprobs).map(|(p, d)| p * (d - mean)).collect(),
        Normalization::SumNormalize => {
            let total: f64 = acts.outputs.iter().map(|o| o.max(0.0)).sum();
            acts.outputs
                .iter()
                .zip(dprobs)
                .map(|(&o, d)| if o > 0.0 { (d - mean) / total } else { 0.0 })
                .collect()
        }
    };

    let t = &params.tensors;
    let hidden = params.hidden;
    let mut dhidden = vec![0.0; hidden];
    for (k, &g) in doutputs.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grads.b2[k] += g;
        let row = &t.w2[k * hidden..(k + 1) * hidden];
        let grow = &mut grads.w2[k * hidden..(k + 1) * hidden];
        for j in 0..hidden {
            grow[j] += g * acts.hidden[j];
            dhidden[j] += g * row[j];
        }
    }
    let n_in = params.input_dim;
    for j in 0..hidden {
        if acts.hidden_pre[j] <= 0.0 {
            continue;
        }
        let g = dhidden[j] * mask.map_or(1.0, |m| m[j]);
        if g == 0.0 {
            continue;
        }
        grads.b1[j] += g;
        grads.w1[j * n_in..(j + 1) * n_in]
            .iter_mut()
            .zip(input)
            .for_each(|(w, x)| *w += g * x);
    }
}
