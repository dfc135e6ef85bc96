use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tracing::{debug, warn};

use super::data::{
    augment, scale_inputs, FeatureLayout, InputScaling, LossScaling, TrainingInstance,
};
use super::loss::{rps_loss, rps_weights};
use super::mlp::{backward, forward, forward_pass, MlpParameters, Normalization, Tensors};
use crate::error::{Error, Result};
use crate::forecaster::{DistributionSource, StepContext};
use crate::kernels::SamplingDistribution;
use crate::seed::derive_seed;
use crate::timeseries::TimeSeries;

/// Instances per gradient chunk. Chunks are reduced in order, so results do
/// not depend on the thread count.
const GRADIENT_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub dropout: f64,
    pub normalization: Normalization,
    pub input_scaling: InputScaling,
    pub loss_scaling: LossScaling,
    pub static_feature: bool,
    pub context_length: usize,
    /// Number of sliding windows taken from the end of each series.
    pub prediction_length: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainingConfig {
    pub const DEFAULT_CONTEXT_MULTIPLIER: usize = 28;
    pub const SHORT_HISTORY_CONTEXT_MULTIPLIER: usize = 10;

    pub fn new(prediction_length: usize, context_length: usize) -> Self {
        Self {
            epochs: 200,
            dropout: 0.0,
            normalization: Normalization::Softmax,
            input_scaling: InputScaling::Standardization,
            loss_scaling: LossScaling::None,
            static_feature: false,
            context_length,
            prediction_length,
            learning_rate: 1e-3,
            batch_size: 64,
            seed: 0,
        }
    }

    /// The full search grid around `self`: dropout, static feature,
    /// normalization, input scaling, loss scaling and epochs.
    pub fn grid(&self) -> Vec<TrainingConfig> {
        let mut out = Vec::with_capacity(64);
        for dropout in [0.0, 0.1] {
            for static_feature in [true, false] {
                for normalization in [Normalization::Softmax, Normalization::SumNormalize] {
                    for input_scaling in [InputScaling::None, InputScaling::Standardization] {
                        for loss_scaling in [LossScaling::None, LossScaling::MinMax] {
                            for epochs in [200, 300] {
                                out.push(TrainingConfig {
                                    epochs,
                                    dropout,
                                    normalization,
                                    input_scaling,
                                    loss_scaling,
                                    static_feature,
                                    ..self.clone()
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.context_length == 0 || self.prediction_length == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "context length, prediction length and batch size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter(
                "learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
}

fn dropout_mask(dropout: Dropout, instance: u64, hidden: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(dropout.seed, instance));
    let keep = 1.0 / (1.0 - dropout.rate);
    (0..hidden)
        .map(|_| {
            if rng.gen::<f64>() < dropout.rate {
                0.0
            } else {
                keep
            }
        })
        .collect()
}

/// Mean batch loss, its gradient, and how many instances hit the
/// sum-normalize fallback.
#[derive(Debug, Clone)]
pub struct LossGradient {
    pub grads: Tensors,
    pub loss: f64,
    pub degenerate: usize,
}

fn instance_loss(
    params: &MlpParameters,
    inst: &TrainingInstance,
    input_scaling: InputScaling,
    loss_scaling: LossScaling,
    mask: Option<&[f64]>,
) -> Result<(f64, super::mlp::Activations, Vec<f64>, f64)> {
    let input = inst.input(input_scaling);
    let acts = forward_pass(params, &input, mask)?;
    let dist = SamplingDistribution::new(acts.probs.clone())?;
    let scale = inst.scale_stats.loss_scale(loss_scaling);
    let loss = rps_loss(&dist, &inst.context_values, inst.target)? / scale;
    Ok((loss, acts, input, scale))
}

/// Mean scaled RPS over `batch` with dropout disabled.
pub fn batch_loss(
    params: &MlpParameters,
    batch: &[&TrainingInstance],
    input_scaling: InputScaling,
    loss_scaling: LossScaling,
) -> Result<f64> {
    let mut total = 0.0;
    for inst in batch {
        total += instance_loss(params, inst, input_scaling, loss_scaling, None)?.0;
    }
    Ok(total / batch.len() as f64)
}

/// Exact gradient of the mean scaled RPS over `batch`.
pub fn loss_gradient(
    params: &MlpParameters,
    batch: &[&TrainingInstance],
    input_scaling: InputScaling,
    loss_scaling: LossScaling,
    dropout: Option<Dropout>,
) -> Result<LossGradient> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    let n = batch.len() as f64;
    let partials = batch
        .par_chunks(GRADIENT_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grads = Tensors::zeros(params.input_dim, params.hidden, params.output);
            let mut loss = 0.0;
            let mut degenerate = 0;
            for (i, inst) in chunk.iter().enumerate() {
                let mask = dropout
                    .filter(|d| d.rate > 0.0)
                    .map(|d| dropout_mask(d, (c * GRADIENT_CHUNK + i) as u64, params.hidden));
                let (l, acts, input, scale) =
                    instance_loss(params, inst, input_scaling, loss_scaling, mask.as_deref())?;
                loss += l;
                if acts.degenerate {
                    degenerate += 1;
                    continue;
                }
                let (weights, _) = rps_weights(&inst.context_values, inst.target);
                let dprobs: Vec<f64> = weights.iter().map(|w| w / (scale * n)).collect();
                backward(params, &input, &acts, mask.as_deref(), &dprobs, &mut grads);
            }
            Ok((grads, loss, degenerate))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut iter = partials.into_iter();
    let (mut grads, mut loss, mut degenerate) = iter.next().expect("non-empty batch");
    for (g, l, d) in iter {
        grads.add_assign(&g);
        loss += l;
        degenerate += d;
    }
    Ok(LossGradient {
        grads,
        loss: loss / n,
        degenerate,
    })
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Tensors,
    v: Tensors,
}

impl Adam {
    pub fn new(params: &MlpParameters, lr: f64) -> Self {
        let zeros = Tensors::zeros(params.input_dim, params.hidden, params.output);
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, params: &mut MlpParameters, grads: &Tensors) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let groups = params
            .tensors
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut());
        for (((p, g), m), v) in groups {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub num_instances: usize,
    /// Batches in which at least one instance fell back to uniform.
    pub degenerate_batches: usize,
    pub warnings: Vec<String>,
}

/// A trained global model; usable as a per-step distribution source.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepNptsModel {
    pub params: MlpParameters,
    pub layout: FeatureLayout,
    pub context_length: usize,
    pub input_scaling: InputScaling,
    pub loss_scaling: LossScaling,
}

impl DeepNptsModel {
    /// Network input for a window of `context_length` values starting at
    /// absolute index `window_start`.
    pub fn input(
        &self,
        series: &TimeSeries,
        window: &[f64],
        window_start: usize,
    ) -> Result<Vec<f64>> {
        self.layout.check(series)?;
        let (mut x, _) = scale_inputs(window, self.input_scaling);
        x.extend(
            self.layout
                .window_covariates(series, window_start, self.context_length)?,
        );
        Ok(x)
    }
}

impl DistributionSource for DeepNptsModel {
    fn context_length(&self, series: &TimeSeries) -> Result<usize> {
        if series.len() < self.context_length {
            return Err(Error::InsufficientLength {
                id: series.id().to_owned(),
                reason: format!(
                    "{} values, model context length is {}",
                    series.len(),
                    self.context_length
                ),
            });
        }
        Ok(self.context_length)
    }

    fn distribution(&self, ctx: &StepContext<'_>) -> Result<SamplingDistribution> {
        let input = self.input(ctx.series, ctx.window, ctx.window_start)?;
        forward(&self.params, &input)
    }
}

/// Shared layout of a panel: frequency and dynamic covariate count must agree.
pub fn panel_layout(dataset: &[TimeSeries], static_feature: bool) -> Result<FeatureLayout> {
    let first = dataset.first().ok_or(Error::NoTrainingData)?;
    let layout = FeatureLayout {
        freq: first.freq(),
        num_dynamic: first.num_covariates(),
        static_feature,
    };
    for s in dataset {
        layout.check(s)?;
    }
    Ok(layout)
}

/// Fit one network across every series of the panel.
pub fn train(
    dataset: &[TimeSeries],
    config: &TrainingConfig,
) -> Result<(DeepNptsModel, TrainingLog)> {
    config.validate()?;
    let layout = panel_layout(dataset, config.static_feature)?;
    let mut log = TrainingLog::default();
    let mut instances = Vec::new();
    for series in dataset {
        let aug = augment(
            series,
            &layout,
            config.context_length,
            config.prediction_length,
        )?;
        if let Some(w) = aug.warning {
            warn!("{w}");
            log.warnings.push(w);
        }
        instances.extend(aug.instances);
    }
    if instances.is_empty() {
        return Err(Error::NoTrainingData);
    }
    log.num_instances = instances.len();

    let t = config.context_length;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = MlpParameters::init(layout.input_dim(t), t, t, config.normalization, &mut rng);
    let mut adam = Adam::new(&params, config.learning_rate);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut step = 0u64;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&TrainingInstance> = idx.iter().map(|&i| &instances[i]).collect();
            let dropout = Some(Dropout {
                rate: config.dropout,
                seed: derive_seed(config.seed, step),
            });
            step += 1;
            let lg = loss_gradient(
                &params,
                &batch,
                config.input_scaling,
                config.loss_scaling,
                dropout,
            )?;
            if !lg.loss.is_finite() || !lg.grads.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            if lg.degenerate > 0 {
                debug!(
                    epoch,
                    batch = b,
                    count = lg.degenerate,
                    "uniform fallback in sum-normalize"
                );
                log.degenerate_batches += 1;
            }
            adam.update(&mut params, &lg.grads);
            if !params.tensors.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += lg.loss * batch.len() as f64;
        }
        let mean = epoch_loss / instances.len() as f64;
        debug!(epoch, loss = mean, "epoch done");
        log.epoch_losses.push(mean);
    }

    let model = DeepNptsModel {
        params,
        layout,
        context_length: t,
        input_scaling: config.input_scaling,
        loss_scaling: config.loss_scaling,
    };
    Ok((model, log))
}
