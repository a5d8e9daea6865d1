//! Frame-level evaluation: per-class average precision over ranked frame
//! scores, mean AP, accuracy, and a confusion matrix.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stream::FrameScore;

/// Frame-level quality report for one stream or a pooled set of streams.
///
/// `per_class_ap` holds only classes that occur in the ground truth; a
/// class never observed has no positives to rank, so its AP is undefined —
/// such classes are listed in `absent_classes` and excluded from `mean_ap`.
/// `confusion[t][p]` counts frames of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub per_class_ap: BTreeMap<String, f64>,
    pub absent_classes: Vec<String>,
    pub mean_ap: f64,
    pub frame_accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub num_frames: usize,
}

/// Average precision for one class: frames ranked by that class's score
/// (descending, ties to the earlier frame), precision taken through the
/// all-points interpolation envelope, summed at each positive rank.
fn average_precision(scores: &[f64], positive: &[bool]) -> f64 {
    let p = positive.iter().filter(|&&b| b).count();
    assert!(p > 0, "caller excludes absent classes");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps ties in frame order.
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut precision = Vec::with_capacity(order.len());
    let mut hits = 0usize;
    for (rank, &idx) in order.iter().enumerate() {
        if positive[idx] {
            hits += 1;
        }
        precision.push(hits as f64 / (rank + 1) as f64);
    }
    // Envelope: precision at rank k becomes max precision at any rank ≥ k.
    let mut envelope = precision;
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let sum: f64 = order
        .iter()
        .enumerate()
        .filter(|(_, &idx)| positive[idx])
        .map(|(rank, _)| envelope[rank])
        .sum();
    sum / p as f64
}

/// Scores frame predictions against ground truth.
pub fn evaluate<F: Scalar>(
    frame_scores: &[FrameScore<F>],
    labels: &[usize],
    class_names: &[String],
) -> Result<EvaluationReport> {
    if frame_scores.len() != labels.len() {
        return Err(Error::EvalLengthMismatch {
            scores: frame_scores.len(),
            labels: labels.len(),
        });
    }
    if frame_scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let c = class_names.len();
    if frame_scores[0].score.len() != c {
        return Err(Error::ClassCountMismatch {
            model: frame_scores[0].score.len(),
            labels: c,
        });
    }
    for &l in labels {
        if l >= c {
            return Err(Error::LabelOutOfRange {
                label: l,
                num_classes: c,
            });
        }
    }

    let mut confusion = vec![vec![0usize; c]; c];
    let mut correct = 0usize;
    for (fs, &label) in frame_scores.iter().zip(labels) {
        confusion[label][fs.predicted_class] += 1;
        if fs.predicted_class == label {
            correct += 1;
        }
    }

    let mut per_class_ap = BTreeMap::new();
    let mut absent_classes = Vec::new();
    for (class, name) in class_names.iter().enumerate() {
        let positive: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        if !positive.iter().any(|&b| b) {
            absent_classes.push(name.clone());
            continue;
        }
        let scores: Vec<f64> = frame_scores
            .iter()
            .map(|fs| fs.score.probs()[class].to_f64_lossy())
            .collect();
        per_class_ap.insert(name.clone(), average_precision(&scores, &positive));
    }
    let mean_ap = per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64;

    Ok(EvaluationReport {
        per_class_ap,
        absent_classes,
        mean_ap,
        frame_accuracy: correct as f64 / labels.len() as f64,
        confusion,
        num_frames: labels.len(),
    })
}
