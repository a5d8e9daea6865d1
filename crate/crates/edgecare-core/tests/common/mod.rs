//! Shared fixtures and oracles for the integration suites.
//!
//! The oracles here are deliberately independent reimplementations written
//! from the defining formulas — finite differences for gradients, explicit
//! covering-window averages for frame scores, element counting for
//! parameter budgets, a quadratic precision-envelope scan for AP — so they
//! share no code path with the library routines they check.

#![allow(dead_code)]

use std::collections::BTreeSet;

use edgecare_core::nn::{softmax_xent_batch, FeatureShape, LayerKind, LayerSpec};
use edgecare_core::rng::{seeded, sub_seed, SeededRng};
use edgecare_core::tensor::Tensor;
use edgecare_core::{PipelineModel, PipelineTensor, Value};
use rand::Rng;

/// A small random model touching every layer kind, plus a matching random
/// input batch and labels. Architectures vary in channel counts, kernel
/// size, padding, and depth; spatial dims are tracked so every layer is
/// well-formed.
pub fn random_small_model(seed: u64) -> (PipelineModel, PipelineTensor, Vec<usize>) {
    let mut rng = seeded(sub_seed(seed, "arch"));
    let in_c = rng.random_range(1..=2);
    let side = rng.random_range(6..=8);
    let classes = rng.random_range(2..=4);
    let num_blocks = rng.random_range(1..=2);

    let mut specs = Vec::new();
    let (mut c, mut h, mut w) = (in_c, side, side);
    for b in 0..num_blocks {
        let out_c = rng.random_range(2..=4);
        // Deeper blocks see shrunken maps; the kernel must still fit.
        let k = rng.random_range(2..=3).min(h.min(w));
        let p = rng.random_range(0..=1);
        specs.push(LayerSpec::new(
            format!("conv{b}"),
            b,
            LayerKind::Conv2d {
                in_channels: c,
                out_channels: out_c,
                kernel_h: k,
                kernel_w: k,
                stride: 1,
                padding: p,
            },
        ));
        h = h + 2 * p - k + 1;
        w = w + 2 * p - k + 1;
        c = out_c;
        specs.push(LayerSpec::new(
            format!("bn{b}"),
            b,
            LayerKind::BatchNorm {
                num_features: c,
                epsilon: 1e-5,
                momentum: 0.1,
            },
        ));
        specs.push(LayerSpec::new(format!("relu{b}"), b, LayerKind::Relu));
        if h >= 4 && w >= 4 {
            specs.push(LayerSpec::new(
                format!("pool{b}"),
                b,
                LayerKind::MaxPool2d { kernel: 2, stride: 2 },
            ));
            h = (h - 2) / 2 + 1;
            w = (w - 2) / 2 + 1;
        }
    }
    specs.push(LayerSpec::new("gap", num_blocks, LayerKind::GlobalAvgPool));
    specs.push(LayerSpec::new(
        "head",
        num_blocks + 1,
        LayerKind::Dense {
            in_features: c,
            out_features: classes,
        },
    ));

    let input_shape = FeatureShape::Spatial {
        channels: in_c,
        height: side,
        width: side,
    };
    let model =
        PipelineModel::new(input_shape, specs, sub_seed(seed, "init")).expect("valid random arch");

    let batch_len = 2;
    let mut drng = seeded(sub_seed(seed, "data"));
    let data: Vec<Value> = (0..batch_len * in_c * side * side)
        .map(|_| drng.random_range(0.0..1.0))
        .collect();
    let batch = Tensor::from_vec(&[batch_len, in_c, side, side], data).unwrap();
    let labels: Vec<usize> = (0..batch_len).map(|_| drng.random_range(0..classes)).collect();
    (model, batch, labels)
}

/// Training-mode batch loss: the exact scalar whose gradient `backward`
/// computes (batch statistics in unfrozen batchnorm layers).
pub fn train_loss(model: &PipelineModel, batch: &PipelineTensor, labels: &[usize]) -> Value {
    let frozen = BTreeSet::new();
    let (_, trace, _) = model.forward_train(batch, &frozen).expect("forward");
    let (loss, _) = softmax_xent_batch(trace.logits(), labels).expect("loss");
    loss
}

/// Loss after nudging one trainable element by `delta`, via a rebuilt model
/// so the original is untouched.
pub fn perturbed_loss(
    model: &PipelineModel,
    batch: &PipelineTensor,
    labels: &[usize],
    layer_idx: usize,
    tensor_idx: usize,
    elem: usize,
    delta: Value,
) -> Value {
    let mut layers = model.layers().to_vec();
    layers[layer_idx].params.trainable_mut()[tensor_idx].data_mut()[elem] += delta;
    let perturbed = PipelineModel::from_layers(model.input_shape(), layers).expect("rebuild");
    train_loss(&perturbed, batch, labels)
}

/// Central-difference gradient check over every trainable element of every
/// layer. Returns the worst relative error, with the relative scale
/// floored at 1e-6 so near-zero gradient pairs compare absolutely.
pub fn fd_max_relative_error(
    model: &PipelineModel,
    batch: &PipelineTensor,
    labels: &[usize],
    h: Value,
) -> f64 {
    let frozen = BTreeSet::new();
    let (_, trace, _) = model.forward_train(batch, &frozen).expect("forward");
    let grads = model.backward(&trace, labels).expect("backward");

    let mut worst = 0.0f64;
    for (layer_idx, layer) in model.layers().iter().enumerate() {
        let tensors = layer.params.trainable();
        if tensors.is_empty() {
            continue;
        }
        let g = grads
            .get(layer.name())
            .unwrap_or_else(|| panic!("no gradient for {}", layer.name()));
        assert_eq!(g.len(), tensors.len(), "one gradient per trainable tensor");
        for (tensor_idx, t) in tensors.iter().enumerate() {
            for elem in 0..t.len() {
                let up = perturbed_loss(model, batch, labels, layer_idx, tensor_idx, elem, h);
                let dn = perturbed_loss(model, batch, labels, layer_idx, tensor_idx, elem, -h);
                let fd = (up - dn) / (2.0 * h);
                let bp = g[tensor_idx].data()[elem];
                let rel = (fd - bp).abs() / fd.abs().max(bp.abs()).max(1e-6);
                if rel > worst {
                    worst = rel;
                }
            }
        }
    }
    worst
}

/// Frame scores straight from the covering-window definition: frame `i`
/// averages the scores of every window `[t1, t1+W)` containing it, in
/// ascending start order, sum first then one multiply by 1/n.
pub fn oracle_frame_scores(
    window_scores: &[(usize, Vec<f64>)],
    window_len: usize,
    t: usize,
) -> Vec<(Vec<f64>, usize)> {
    (0..t)
        .map(|i| {
            let covering: Vec<&Vec<f64>> = window_scores
                .iter()
                .filter(|(t1, _)| *t1 <= i && i < t1 + window_len)
                .map(|(_, p)| p)
                .collect();
            assert!(!covering.is_empty(), "frame {i} uncovered");
            let c = covering[0].len();
            let mut acc = vec![0.0f64; c];
            for v in &covering {
                for (a, p) in acc.iter_mut().zip(v.iter()) {
                    *a += *p;
                }
            }
            let inv = 1.0 / covering.len() as f64;
            for a in acc.iter_mut() {
                *a *= inv;
            }
            (acc, covering.len())
        })
        .collect()
}

/// Index of the largest entry, ties to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Parameter budget by walking the actual tensors and counting elements,
/// never consulting the layer-kind arithmetic.
pub fn enumerated_budget(
    model: &PipelineModel,
    frozen: &BTreeSet<String>,
) -> (usize, usize) {
    let mut trainable = 0usize;
    let mut frozen_count = 0usize;
    for layer in model.layers() {
        let n: usize = layer.params.trainable().iter().map(|t| t.len()).sum();
        if frozen.contains(layer.name()) {
            frozen_count += n;
        } else {
            trainable += n;
        }
    }
    (trainable, frozen_count)
}

/// Average precision by brute force: for each positive, scan every rank at
/// or below it for the best precision (the all-points envelope), then
/// average over positives. Quadratic and proud of it.
pub fn oracle_average_precision(scores: &[f64], positive: &[bool]) -> f64 {
    let p = positive.iter().filter(|&&b| b).count();
    assert!(p > 0, "no positives to rank");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut sum = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        if !positive[idx] {
            continue;
        }
        let mut best = 0.0f64;
        for r2 in rank..order.len() {
            let hits = order[..=r2].iter().filter(|&&j| positive[j]).count();
            let prec = hits as f64 / (r2 + 1) as f64;
            if prec > best {
                best = prec;
            }
        }
        sum += best;
    }
    sum / p as f64
}

/// Mean AP over the classes that actually occur in `labels`.
pub fn oracle_mean_ap(probs: &[Vec<f64>], labels: &[usize], num_classes: usize) -> f64 {
    let mut aps = Vec::new();
    for class in 0..num_classes {
        if !labels.iter().any(|&l| l == class) {
            continue;
        }
        let scores: Vec<f64> = probs.iter().map(|p| p[class]).collect();
        let positive: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        aps.push(oracle_average_precision(&scores, &positive));
    }
    assert!(!aps.is_empty(), "no class present in ground truth");
    aps.iter().sum::<f64>() / aps.len() as f64
}

/// A random point strictly inside the probability simplex.
pub fn random_probs(rng: &mut SeededRng, c: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}
