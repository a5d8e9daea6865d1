//! Layer declarations and their parameter tensors.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// What a layer computes. Hyperparameters live here; learned state lives in
/// [`LayerParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm {
        num_features: usize,
        epsilon: f64,
        momentum: f64,
    },
    Relu,
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    GlobalAvgPool,
    Dense {
        in_features: usize,
        out_features: usize,
    },
}

impl LayerKind {
    /// Trainable parameter count (weights, biases, affine batchnorm terms).
    pub fn trainable_param_count(&self) -> usize {
        match self {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => out_channels * in_channels * kernel_h * kernel_w + out_channels,
            LayerKind::BatchNorm { num_features, .. } => 2 * num_features,
            LayerKind::Dense {
                in_features,
                out_features,
            } => in_features * out_features + out_features,
            LayerKind::Relu | LayerKind::MaxPool2d { .. } | LayerKind::GlobalAvgPool => 0,
        }
    }

    /// Non-trainable state (batchnorm running statistics).
    pub fn non_trainable_param_count(&self) -> usize {
        match self {
            LayerKind::BatchNorm { num_features, .. } => 2 * num_features,
            _ => 0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::BatchNorm { .. } => "batchnorm",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool2d { .. } => "maxpool2d",
            LayerKind::GlobalAvgPool => "globalavgpool",
            LayerKind::Dense { .. } => "dense",
        }
    }

    /// Shapes of this layer's parameter tensors in canonical storage order:
    /// weight then bias for conv and dense; gamma, beta, running mean,
    /// running variance for batchnorm.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => vec![
                vec![*out_channels, *in_channels, *kernel_h, *kernel_w],
                vec![*out_channels],
            ],
            LayerKind::BatchNorm { num_features, .. } => vec![vec![*num_features]; 4],
            LayerKind::Dense {
                in_features,
                out_features,
            } => vec![vec![*out_features, *in_features], vec![*out_features]],
            LayerKind::Relu | LayerKind::MaxPool2d { .. } | LayerKind::GlobalAvgPool => vec![],
        }
    }
}

/// One layer in the model description: name, block grouping, computation.
/// `block_id` groups layers into the blocks the freeze policies refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub block_id: usize,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, block_id: usize, kind: LayerKind) -> Self {
        LayerSpec {
            name: name.into(),
            block_id,
            kind,
        }
    }
}

/// Learned state of a layer. Conv weights are `[out, in, kh, kw]`, dense
/// weights `[out, in]`, batchnorm vectors `[num_features]`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<F> {
    Empty,
    Conv {
        weight: Tensor<F>,
        bias: Tensor<F>,
    },
    BatchNorm {
        gamma: Tensor<F>,
        beta: Tensor<F>,
        running_mean: Tensor<F>,
        running_var: Tensor<F>,
    },
    Dense {
        weight: Tensor<F>,
        bias: Tensor<F>,
    },
}

impl<F: Scalar> LayerParams<F> {
    /// Trainable tensors in canonical order (weight then bias, gamma then beta).
    pub fn trainable(&self) -> Vec<&Tensor<F>> {
        match self {
            LayerParams::Empty => vec![],
            LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                vec![weight, bias]
            }
            LayerParams::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
        }
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<F>> {
        match self {
            LayerParams::Empty => vec![],
            LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                vec![weight, bias]
            }
            LayerParams::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
        }
    }

    /// All tensors in serialization order, running statistics last.
    pub fn all(&self) -> Vec<&Tensor<F>> {
        match self {
            LayerParams::Empty => vec![],
            LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                vec![weight, bias]
            }
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => vec![gamma, beta, running_mean, running_var],
        }
    }

    pub fn all_mut(&mut self) -> Vec<&mut Tensor<F>> {
        match self {
            LayerParams::Empty => vec![],
            LayerParams::Conv { weight, bias } | LayerParams::Dense { weight, bias } => {
                vec![weight, bias]
            }
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => vec![gamma, beta, running_mean, running_var],
        }
    }
}

/// A layer spec paired with its learned state.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub spec: LayerSpec,
    pub params: LayerParams<F>,
}

impl<F: Scalar> Layer<F> {
    pub fn name(&self) -> &str {
        &self.spec.name
    }
}

/// Shape of the per-item feature carried between layers: spatial maps for
/// the conv stack, flat vectors after pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureShape {
    Spatial {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat {
        features: usize,
    },
}

impl FeatureShape {
    pub fn volume(&self) -> usize {
        match *self {
            FeatureShape::Spatial {
                channels,
                height,
                width,
            } => channels * height * width,
            FeatureShape::Flat { features } => features,
        }
    }

    /// Shape of a batch tensor carrying `b` items of this feature shape.
    pub fn batch_shape(&self, b: usize) -> Vec<usize> {
        match *self {
            FeatureShape::Spatial {
                channels,
                height,
                width,
            } => vec![b, channels, height, width],
            FeatureShape::Flat { features } => vec![b, features],
        }
    }
}

impl std::fmt::Display for FeatureShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureShape::Spatial {
                channels,
                height,
                width,
            } => write!(f, "[{channels}x{height}x{width}]"),
            FeatureShape::Flat { features } => write!(f, "[{features}]"),
        }
    }
}
