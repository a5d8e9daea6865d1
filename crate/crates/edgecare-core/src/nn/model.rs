//! The layer-sequence model: shape validation, forward/backward passes,
//! SGD updates, and parameter accounting.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::kernels::{self, ConvGeom};
use super::layer::{FeatureShape, Layer, LayerKind, LayerParams, LayerSpec};
use super::loss::softmax_xent_batch;
use crate::error::{Error, Result};
use crate::rng::{seeded, SeededRng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Gradients of the mean batch loss, keyed by layer name. Tensors appear in
/// the layer's canonical parameter order (weight/bias or gamma/beta).
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    by_layer: BTreeMap<String, Vec<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, layer: &str) -> Option<&[Tensor<F>]> {
        self.by_layer.get(layer).map(|v| v.as_slice())
    }

    pub fn layers(&self) -> impl Iterator<Item = (&String, &Vec<Tensor<F>>)> {
        self.by_layer.iter()
    }
}

/// Per-layer cache from a training forward pass, consumed by backward.
#[derive(Debug, Clone)]
enum LayerAux<F> {
    None,
    BatchNorm {
        mean: Vec<F>,
        var: Vec<F>,
        batch_stats: bool,
    },
    MaxPool {
        argmax: Vec<usize>,
    },
}

/// Activations and auxiliary state recorded during a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<F> {
    inputs: Vec<Tensor<F>>,
    aux: Vec<LayerAux<F>>,
    logits: Tensor<F>,
}

impl<F: Scalar> ForwardTrace<F> {
    pub fn logits(&self) -> &Tensor<F> {
        &self.logits
    }
}

/// Pending running-statistic updates produced by a training forward pass.
/// Applying them is a separate, explicit step so gradient probes stay pure.
#[derive(Debug, Clone, Default)]
pub struct StatUpdates<F> {
    updates: Vec<(usize, Vec<F>, Vec<F>)>,
}

/// Parameter counts for one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCount {
    pub name: String,
    pub kind: &'static str,
    pub block_id: usize,
    pub trainable: usize,
    pub non_trainable: usize,
}

/// Full parameter accounting: conv `out*in*kh*kw + out`, dense `in*out + out`,
/// batchnorm `2*features` trainable plus `2*features` running statistics
/// reported separately.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterCount {
    pub per_layer: Vec<LayerCount>,
    pub total_trainable: usize,
    pub total_non_trainable: usize,
}

/// Ordered layer sequence with learned parameters. The final layer is the
/// dense class head; its width defines `num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<F> {
    layers: Vec<Layer<F>>,
    input_shape: FeatureShape,
    num_classes: usize,
    /// Feature shape entering each layer (after any implicit flatten).
    in_shapes: Vec<FeatureShape>,
    out_shapes: Vec<FeatureShape>,
    index: BTreeMap<String, usize>,
}

/// Output feature shape of a layer, or a build error naming it.
fn infer_output(spec: &LayerSpec, input: FeatureShape) -> Result<FeatureShape> {
    let mismatch = |expected: String| Error::ShapeMismatch {
        layer: spec.name.clone(),
        expected,
        got: input.to_string(),
    };
    match &spec.kind {
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
        } => match input {
            FeatureShape::Spatial {
                channels,
                height,
                width,
            } if channels == *in_channels => {
                let oh = (height + 2 * padding).checked_sub(*kernel_h).map(|v| v / stride + 1);
                let ow = (width + 2 * padding).checked_sub(*kernel_w).map(|v| v / stride + 1);
                match (oh, ow) {
                    (Some(h), Some(w)) if h > 0 && w > 0 => Ok(FeatureShape::Spatial {
                        channels: *out_channels,
                        height: h,
                        width: w,
                    }),
                    _ => Err(mismatch(format!(
                        "spatial input at least {kernel_h}x{kernel_w} after padding"
                    ))),
                }
            }
            _ => Err(mismatch(format!("spatial input with {in_channels} channels"))),
        },
        LayerKind::BatchNorm { num_features, .. } => match input {
            FeatureShape::Spatial { channels, .. } if channels == *num_features => Ok(input),
            _ => Err(mismatch(format!("spatial input with {num_features} channels"))),
        },
        LayerKind::Relu => Ok(input),
        LayerKind::MaxPool2d { kernel, stride } => match input {
            FeatureShape::Spatial {
                channels,
                height,
                width,
            } => {
                let oh = kernels::maxpool_out_dim(height, *kernel, *stride);
                let ow = kernels::maxpool_out_dim(width, *kernel, *stride);
                if oh == 0 || ow == 0 {
                    return Err(mismatch(format!("spatial input at least {kernel}x{kernel}")));
                }
                Ok(FeatureShape::Spatial {
                    channels,
                    height: oh,
                    width: ow,
                })
            }
            _ => Err(mismatch("spatial input".into())),
        },
        LayerKind::GlobalAvgPool => match input {
            FeatureShape::Spatial { channels, .. } => Ok(FeatureShape::Flat { features: channels }),
            _ => Err(mismatch("spatial input".into())),
        },
        LayerKind::Dense {
            in_features,
            out_features,
        } => {
            // A dense layer flattens spatial input implicitly.
            if input.volume() != *in_features {
                return Err(mismatch(format!("{in_features} input features")));
            }
            Ok(FeatureShape::Flat {
                features: *out_features,
            })
        }
    }
}

fn xavier_uniform<F: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut SeededRng,
) -> Tensor<F> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..shape.iter().product::<usize>())
        .map(|_| F::from_f64_lossy(rng.random_range(-limit..limit)))
        .collect();
    Tensor::from_vec(shape, data).expect("generated data matches shape")
}

/// Freshly initialized parameters for a layer spec: Xavier-uniform weights,
/// zero biases, unit batchnorm scale, zero-mean/unit-var running stats.
pub fn init_params<F: Scalar>(kind: &LayerKind, rng: &mut SeededRng) -> LayerParams<F> {
    match kind {
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            ..
        } => {
            let fan_in = in_channels * kernel_h * kernel_w;
            let fan_out = out_channels * kernel_h * kernel_w;
            LayerParams::Conv {
                weight: xavier_uniform(
                    &[*out_channels, *in_channels, *kernel_h, *kernel_w],
                    fan_in,
                    fan_out,
                    rng,
                ),
                bias: Tensor::zeros(&[*out_channels]),
            }
        }
        LayerKind::BatchNorm { num_features, .. } => LayerParams::BatchNorm {
            gamma: Tensor::filled(&[*num_features], F::one()),
            beta: Tensor::zeros(&[*num_features]),
            running_mean: Tensor::zeros(&[*num_features]),
            running_var: Tensor::filled(&[*num_features], F::one()),
        },
        LayerKind::Dense {
            in_features,
            out_features,
        } => LayerParams::Dense {
            weight: xavier_uniform(&[*out_features, *in_features], *in_features, *out_features, rng),
            bias: Tensor::zeros(&[*out_features]),
        },
        LayerKind::Relu | LayerKind::MaxPool2d { .. } | LayerKind::GlobalAvgPool => {
            LayerParams::Empty
        }
    }
}

impl<F: Scalar> Model<F> {
    /// Builds and initializes a model from layer specs. All weights come
    /// from the seeded generator, so equal (specs, seed) give bitwise-equal
    /// models.
    pub fn new(input_shape: FeatureShape, specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        let layers = specs
            .into_iter()
            .map(|spec| {
                let params = init_params(&spec.kind, &mut rng);
                Layer { spec, params }
            })
            .collect();
        Self::from_layers(input_shape, layers)
    }

    /// Assembles a model from pre-built layers (checkpoint load, head
    /// realignment), re-running all structural validation.
    pub fn from_layers(input_shape: FeatureShape, layers: Vec<Layer<F>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::MissingClassHead);
        }
        let mut index = BTreeMap::new();
        for (i, layer) in layers.iter().enumerate() {
            if index.insert(layer.spec.name.clone(), i).is_some() {
                return Err(Error::DuplicateLayerName(layer.spec.name.clone()));
            }
        }

        let mut in_shapes = Vec::with_capacity(layers.len());
        let mut out_shapes = Vec::with_capacity(layers.len());
        let mut shape = input_shape;
        for layer in &layers {
            // Record the shape as the kernel sees it: dense flattens first.
            let kernel_in = match (&layer.spec.kind, shape) {
                (LayerKind::Dense { .. }, s) => FeatureShape::Flat {
                    features: s.volume(),
                },
                (_, s) => s,
            };
            let out = infer_output(&layer.spec, shape)?;
            in_shapes.push(kernel_in);
            out_shapes.push(out);
            shape = out;
        }

        let num_classes = match (&layers.last().unwrap().spec.kind, shape) {
            (LayerKind::Dense { out_features, .. }, FeatureShape::Flat { features })
                if features == *out_features =>
            {
                *out_features
            }
            _ => return Err(Error::MissingClassHead),
        };

        Ok(Model {
            layers,
            input_shape,
            num_classes,
            in_shapes,
            out_shapes,
            index,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_shape(&self) -> FeatureShape {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn layer(&self, name: &str) -> Option<&Layer<F>> {
        self.layer_index(name).map(|i| &self.layers[i])
    }

    /// Name of the final dense layer (the class head).
    pub fn head_name(&self) -> &str {
        self.layers.last().unwrap().name()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    /// Replaces the class head with a freshly initialized dense layer of
    /// `new_classes` outputs; every other layer keeps its tensors untouched.
    pub fn with_new_head(&self, new_classes: usize, seed: u64) -> Result<Self> {
        let mut layers = self.layers.clone();
        let head = layers.last_mut().unwrap();
        let in_features = match head.spec.kind {
            LayerKind::Dense { in_features, .. } => in_features,
            _ => return Err(Error::MissingClassHead),
        };
        head.spec.kind = LayerKind::Dense {
            in_features,
            out_features: new_classes,
        };
        let mut rng = seeded(seed);
        head.params = init_params(&head.spec.kind, &mut rng);
        Self::from_layers(self.input_shape, layers)
    }

    fn check_batch(&self, batch: &Tensor<F>) -> Result<usize> {
        let expected = self.input_shape.batch_shape(1);
        let got = batch.shape();
        if got.len() != expected.len() || got[1..] != expected[1..] || got[0] == 0 {
            return Err(Error::ShapeMismatch {
                layer: self.layers[0].spec.name.clone(),
                expected: format!("batch of {}", self.input_shape),
                got: format!("{got:?}"),
            });
        }
        Ok(got[0])
    }

    /// Eval-mode forward pass: batchnorm uses running statistics and no
    /// state changes, so identical inputs give bitwise-identical logits.
    pub fn forward(&self, batch: &Tensor<F>) -> Result<Tensor<F>> {
        let (logits, _, _) = self.run_forward(batch, None)?;
        Ok(logits)
    }

    /// Train-mode forward pass. Batchnorm layers use batch statistics and
    /// queue running-stat updates, except layers named in `frozen`, which
    /// stay in eval mode so their state cannot drift. Nothing is mutated;
    /// apply the returned updates explicitly.
    pub fn forward_train(
        &self,
        batch: &Tensor<F>,
        frozen: &BTreeSet<String>,
    ) -> Result<(Tensor<F>, ForwardTrace<F>, StatUpdates<F>)> {
        let (logits, trace, updates) = self.run_forward(batch, Some(frozen))?;
        Ok((logits, trace.expect("trace recorded in train mode"), updates))
    }

    fn run_forward(
        &self,
        batch: &Tensor<F>,
        train_frozen: Option<&BTreeSet<String>>,
    ) -> Result<(Tensor<F>, Option<ForwardTrace<F>>, StatUpdates<F>)> {
        let b = self.check_batch(batch)?;
        let train = train_frozen.is_some();
        let mut inputs = Vec::new();
        let mut aux = Vec::new();
        let mut updates = StatUpdates::default();

        let mut act = batch.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            // Dense layers consume the flattened view.
            if matches!(layer.spec.kind, LayerKind::Dense { .. }) {
                act = act.reshaped(&self.in_shapes[li].batch_shape(b))?;
            }
            let mut layer_aux = LayerAux::None;
            let out = match (&layer.spec.kind, &layer.params) {
                (
                    LayerKind::Conv2d {
                        in_channels,
                        out_channels,
                        kernel_h,
                        kernel_w,
                        stride,
                        padding,
                    },
                    LayerParams::Conv { weight, bias },
                ) => {
                    let (h, w) = match self.in_shapes[li] {
                        FeatureShape::Spatial { height, width, .. } => (height, width),
                        _ => unreachable!("validated at build"),
                    };
                    let geom = ConvGeom {
                        in_channels: *in_channels,
                        out_channels: *out_channels,
                        kernel_h: *kernel_h,
                        kernel_w: *kernel_w,
                        stride: *stride,
                        padding: *padding,
                        in_h: h,
                        in_w: w,
                    };
                    kernels::conv2d_forward(&act, weight, bias, &geom)
                }
                (
                    LayerKind::BatchNorm {
                        epsilon, momentum, ..
                    },
                    LayerParams::BatchNorm {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                    },
                ) => {
                    let eps = F::from_f64_lossy(*epsilon);
                    let use_batch_stats = train
                        && !train_frozen.unwrap().contains(layer.name());
                    if use_batch_stats {
                        let (mean, var) = kernels::batch_stats(&act);
                        let out =
                            kernels::batchnorm_forward(&act, gamma, beta, &mean, &var, eps);
                        let mom = F::from_f64_lossy(*momentum);
                        let one_m = F::one() - mom;
                        let new_mean: Vec<F> = running_mean
                            .data()
                            .iter()
                            .zip(&mean)
                            .map(|(r, m)| *r * one_m + *m * mom)
                            .collect();
                        let new_var: Vec<F> = running_var
                            .data()
                            .iter()
                            .zip(&var)
                            .map(|(r, v)| *r * one_m + *v * mom)
                            .collect();
                        updates.updates.push((li, new_mean, new_var));
                        layer_aux = LayerAux::BatchNorm {
                            mean,
                            var,
                            batch_stats: true,
                        };
                        out
                    } else {
                        let mean = running_mean.data().to_vec();
                        let var = running_var.data().to_vec();
                        let out =
                            kernels::batchnorm_forward(&act, gamma, beta, &mean, &var, eps);
                        layer_aux = LayerAux::BatchNorm {
                            mean,
                            var,
                            batch_stats: false,
                        };
                        out
                    }
                }
                (LayerKind::Relu, _) => kernels::relu_forward(&act),
                (LayerKind::MaxPool2d { kernel, stride }, _) => {
                    let (out, argmax) = kernels::maxpool_forward(&act, *kernel, *stride);
                    layer_aux = LayerAux::MaxPool { argmax };
                    out
                }
                (LayerKind::GlobalAvgPool, _) => kernels::gap_forward(&act),
                (
                    LayerKind::Dense {
                        in_features,
                        out_features,
                    },
                    LayerParams::Dense { weight, bias },
                ) => kernels::dense_forward(&act, weight, bias, *in_features, *out_features),
                _ => unreachable!("params match kind by construction"),
            };
            if train {
                inputs.push(act);
                aux.push(layer_aux);
            }
            act = out;
        }

        let trace = if train {
            Some(ForwardTrace {
                inputs,
                aux,
                logits: act.clone(),
            })
        } else {
            None
        };
        Ok((act, trace, updates))
    }

    /// Commits queued running-statistic updates from a training forward pass.
    pub fn apply_stat_updates(&mut self, updates: &StatUpdates<F>) {
        for (li, new_mean, new_var) in &updates.updates {
            if let LayerParams::BatchNorm {
                running_mean,
                running_var,
                ..
            } = &mut self.layers[*li].params
            {
                running_mean.data_mut().copy_from_slice(new_mean);
                running_var.data_mut().copy_from_slice(new_var);
            }
        }
    }

    /// Backward pass over a recorded trace: gradients of the mean batch
    /// loss for every trainable parameter tensor.
    pub fn backward(&self, trace: &ForwardTrace<F>, labels: &[usize]) -> Result<Gradients<F>> {
        self.backward_above(trace, labels, 0)
    }

    /// Backward pass that stops below layer `lowest`: param gradients are
    /// produced only for layers `lowest..`. Fine-tuning uses this to skip
    /// work under a fully frozen prefix.
    pub fn backward_above(
        &self,
        trace: &ForwardTrace<F>,
        labels: &[usize],
        lowest: usize,
    ) -> Result<Gradients<F>> {
        for &l in labels {
            if l >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    num_classes: self.num_classes,
                });
            }
        }
        let b = trace.logits.shape()[0];
        let (_, mut grad) = softmax_xent_batch(&trace.logits, labels)?;
        let mut by_layer = BTreeMap::new();

        for li in (lowest..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &trace.inputs[li];
            let mut param_grads: Vec<Tensor<F>> = Vec::new();
            let grad_in = match (&layer.spec.kind, &layer.params, &trace.aux[li]) {
                (
                    LayerKind::Conv2d {
                        in_channels,
                        out_channels,
                        kernel_h,
                        kernel_w,
                        stride,
                        padding,
                    },
                    LayerParams::Conv { weight, .. },
                    _,
                ) => {
                    let (h, w) = match self.in_shapes[li] {
                        FeatureShape::Spatial { height, width, .. } => (height, width),
                        _ => unreachable!(),
                    };
                    let geom = ConvGeom {
                        in_channels: *in_channels,
                        out_channels: *out_channels,
                        kernel_h: *kernel_h,
                        kernel_w: *kernel_w,
                        stride: *stride,
                        padding: *padding,
                        in_h: h,
                        in_w: w,
                    };
                    let (gi, gw, gb) = kernels::conv2d_backward(input, weight, &grad, &geom);
                    param_grads = vec![gw, gb];
                    gi
                }
                (
                    LayerKind::BatchNorm { epsilon, .. },
                    LayerParams::BatchNorm { gamma, .. },
                    LayerAux::BatchNorm {
                        mean,
                        var,
                        batch_stats,
                    },
                ) => {
                    let eps = F::from_f64_lossy(*epsilon);
                    let (gi, gg, gb) = if *batch_stats {
                        kernels::batchnorm_backward_train(input, gamma, mean, var, eps, &grad)
                    } else {
                        kernels::batchnorm_backward_eval(input, gamma, mean, var, eps, &grad)
                    };
                    param_grads = vec![gg, gb];
                    gi
                }
                (LayerKind::Relu, _, _) => kernels::relu_backward(input, &grad),
                (LayerKind::MaxPool2d { .. }, _, LayerAux::MaxPool { argmax }) => {
                    kernels::maxpool_backward(input.shape(), argmax, &grad)
                }
                (LayerKind::GlobalAvgPool, _, _) => kernels::gap_backward(input.shape(), &grad),
                (
                    LayerKind::Dense {
                        in_features,
                        out_features,
                    },
                    LayerParams::Dense { weight, .. },
                    _,
                ) => {
                    let (gi, gw, gb) =
                        kernels::dense_backward(input, weight, &grad, *in_features, *out_features);
                    param_grads = vec![gw, gb];
                    gi
                }
                _ => unreachable!("params and aux match kind by construction"),
            };
            if !param_grads.is_empty() {
                by_layer.insert(layer.spec.name.clone(), param_grads);
            }
            // Undo any implicit flatten so the producing layer sees its own
            // output shape.
            grad = if li > 0 {
                grad_in.reshaped(&self.out_shapes[li - 1].batch_shape(b))?
            } else {
                grad_in
            };
        }
        Ok(Gradients { by_layer })
    }

    /// One SGD update, `theta <- theta - lr * grad`, applied only to layers
    /// named in `trainable`; every other parameter stays bitwise unchanged.
    /// Batchnorm running statistics are never touched here.
    pub fn sgd_step(
        &mut self,
        grads: &Gradients<F>,
        learning_rate: F,
        trainable: &BTreeSet<String>,
    ) -> Result<()> {
        for name in trainable {
            let li = *self
                .index
                .get(name)
                .ok_or_else(|| Error::UnknownLayer(name.clone()))?;
            let Some(layer_grads) = grads.get(name) else {
                continue; // parameter-free layer
            };
            let params = self.layers[li].params.trainable_mut();
            debug_assert_eq!(params.len(), layer_grads.len());
            for (param, grad) in params.into_iter().zip(layer_grads) {
                for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
                    *p = *p - learning_rate * *g;
                }
            }
        }
        Ok(())
    }

    /// Mean loss over a labeled batch in eval mode.
    pub fn eval_loss(&self, batch: &Tensor<F>, labels: &[usize]) -> Result<(F, f64)> {
        let logits = self.forward(batch)?;
        let (loss, _) = softmax_xent_batch(&logits, labels)?;
        let c = self.num_classes;
        let mut correct = 0usize;
        for (bi, &label) in labels.iter().enumerate() {
            let row = &logits.data()[bi * c..(bi + 1) * c];
            let mut best = 0;
            for (j, v) in row.iter().enumerate().skip(1) {
                if *v > row[best] {
                    best = j;
                }
            }
            if best == label {
                correct += 1;
            }
        }
        Ok((loss, correct as f64 / labels.len() as f64))
    }

    /// Formula-based parameter accounting per layer.
    pub fn count_parameters(&self) -> ParameterCount {
        let per_layer: Vec<LayerCount> = self
            .layers
            .iter()
            .map(|l| LayerCount {
                name: l.spec.name.clone(),
                kind: l.spec.kind.label(),
                block_id: l.spec.block_id,
                trainable: l.spec.kind.trainable_param_count(),
                non_trainable: l.spec.kind.non_trainable_param_count(),
            })
            .collect();
        let total_trainable = per_layer.iter().map(|c| c.trainable).sum();
        let total_non_trainable = per_layer.iter().map(|c| c.non_trainable).sum();
        ParameterCount {
            per_layer,
            total_trainable,
            total_non_trainable,
        }
    }
}
