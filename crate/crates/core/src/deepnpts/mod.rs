//! Global forecaster whose sampling distribution is produced by a two-layer
//! network shared across all series and trained with the ranked probability
//! score.
//!
//! The network sees the context window (optionally standardized) followed by
//! `D x (T + 1)` covariates: calendar features, dynamic covariates and an
//! optional static per-series value, covering the window and the predicted
//! step. It outputs one probability per window index. Predictions are still
//! observed values, drawn with those probabilities.

mod data;
mod format;
mod loss;
mod mlp;
mod train;

pub use data::{
    augment, scale_inputs, static_value, Augmentation, FeatureLayout, InputScaling, LossScaling,
    ScaleStats, TrainingInstance,
};
pub use format::{read_model, write_model, FORMAT_VERSION};
pub use loss::{rps_loss, rps_weights};
pub use mlp::{
    backward, forward, forward_pass, Activations, MlpParameters, Normalization, Tensors,
};
pub use train::{
    batch_loss, loss_gradient, panel_layout, train, Adam, DeepNptsModel, Dropout, LossGradient,
    TrainingConfig, TrainingLog,
};
