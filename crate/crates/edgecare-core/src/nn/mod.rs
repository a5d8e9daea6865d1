//! From-scratch neural network stack: layer descriptions, numeric kernels,
//! loss functions, and the trainable model built from them.

pub mod kernels;
pub mod layer;
pub mod loss;
pub mod model;

pub use layer::{FeatureShape, Layer, LayerKind, LayerParams, LayerSpec};
pub use loss::{cross_entropy_loss, softmax, softmax_xent_batch, ProbabilityVector, LOG_CLAMP};
pub use model::{
    ForwardTrace, Gradients, LayerCount, Model, ParameterCount, StatUpdates,
};

use serde::{Deserialize, Serialize};

/// One epoch's record in a training history: mean cross-entropy loss and
/// accuracy measured on the held-out split after the epoch's updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}
