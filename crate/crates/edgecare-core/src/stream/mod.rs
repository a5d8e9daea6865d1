//! Running activity recognition over frame streams: overlapping window
//! extraction, per-window classification, frame-level score aggregation,
//! and run-length merged inference events.

pub mod eval;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax, Model, ProbabilityVector};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use eval::{evaluate, EvaluationReport};

pub const DEFAULT_WINDOW_LEN: usize = 8;
pub const DEFAULT_STRIDE: usize = 4;

/// Sliding-window geometry: length `W` and stride `S`, both in frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_len: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_len: DEFAULT_WINDOW_LEN,
            stride: DEFAULT_STRIDE,
        }
    }
}

impl WindowConfig {
    pub fn new(window_len: usize, stride: usize) -> Result<Self> {
        let cfg = WindowConfig { window_len, stride };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `S ≤ W` keeps consecutive windows overlapping or tiling; a larger
    /// stride would leave frames uncovered.
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.stride == 0 {
            return Err(Error::ZeroWindowParam);
        }
        if self.stride > self.window_len {
            return Err(Error::StrideExceedsWindow {
                stride: self.stride,
                window: self.window_len,
            });
        }
        Ok(())
    }

    /// Window start frames for a stream of `t` frames: `0, S, 2S, …` while
    /// the window fits, plus a final window anchored at `t − W` whenever
    /// the stride pattern would stop short of it, so the tail is always
    /// covered.
    pub fn window_starts(&self, t: usize) -> Result<Vec<usize>> {
        self.validate()?;
        let w = self.window_len;
        if t < w {
            return Err(Error::StreamShorterThanWindow {
                frames: t,
                window: w,
            });
        }
        let mut starts: Vec<usize> = (0..)
            .map(|k| k * self.stride)
            .take_while(|t1| t1 + w <= t)
            .collect();
        if *starts.last().expect("t >= w yields start 0") != t - w {
            starts.push(t - w);
        }
        Ok(starts)
    }
}

/// Cuts a `[T, C, H, W]` stream into overlapping `[W, C, H, W]` windows,
/// returned with their start frames in ascending order.
pub fn extract_windows<F: Scalar>(
    stream: &Tensor<F>,
    cfg: &WindowConfig,
) -> Result<Vec<(usize, Tensor<F>)>> {
    let t = stream.shape()[0];
    Ok(cfg
        .window_starts(t)?
        .into_iter()
        .map(|t1| (t1, stream.slice_axis0(t1, t1 + cfg.window_len)))
        .collect())
}

/// Scores one window: every frame runs through the classifier, the
/// per-frame logits are averaged over the window, and the mean passes
/// through softmax.
pub fn score_window<F: Scalar>(model: &Model<F>, window: &Tensor<F>) -> Result<ProbabilityVector<F>> {
    let logits = model.forward(window)?;
    let frames = logits.shape()[0];
    let classes = logits.shape()[1];
    let inv = F::from_usize_lossy(frames).recip();
    let mean: Vec<F> = (0..classes)
        .map(|c| {
            (0..frames)
                .map(|f| logits.data()[f * classes + c])
                .fold(F::zero(), |a, v| a + v)
                * inv
        })
        .collect();
    Ok(softmax(&mean))
}

/// Window-level scores for a whole stream, in window start order.
pub fn score_stream<F: Scalar>(
    model: &Model<F>,
    stream: &Tensor<F>,
    cfg: &WindowConfig,
) -> Result<Vec<(usize, ProbabilityVector<F>)>> {
    extract_windows(stream, cfg)?
        .iter()
        .map(|(t1, window)| Ok((*t1, score_window(model, window)?)))
        .collect()
}

/// Frame-level activity score: the mean of all covering windows' scores.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScore<F> {
    pub frame_index: usize,
    pub score: ProbabilityVector<F>,
    /// Number of windows covering this frame.
    pub num_windows: usize,
    pub predicted_class: usize,
}

/// Aggregates window scores to per-frame scores: frame `i`'s score is the
/// mean of every covering window's score, averaged over that frame's own
/// covering count. Summation runs in window start order so parallel
/// scoring backends reproduce the sequential result exactly.
pub fn score_frames<F: Scalar>(
    window_scores: &[(usize, ProbabilityVector<F>)],
    cfg: &WindowConfig,
    t: usize,
) -> Result<Vec<FrameScore<F>>> {
    cfg.validate()?;
    let mut ordered: Vec<&(usize, ProbabilityVector<F>)> = window_scores.iter().collect();
    ordered.sort_by_key(|(t1, _)| *t1);
    let w = cfg.window_len;
    (0..t)
        .map(|i| {
            let covering: Vec<&ProbabilityVector<F>> = ordered
                .iter()
                .filter(|(t1, _)| *t1 <= i && i < t1 + w)
                .map(|(_, score)| score)
                .collect();
            if covering.is_empty() {
                return Err(Error::UncoveredFrame(i));
            }
            let score = ProbabilityVector::mean_of(&covering);
            let predicted_class = score.argmax();
            Ok(FrameScore {
                frame_index: i,
                score,
                num_windows: covering.len(),
                predicted_class,
            })
        })
        .collect()
}

/// Full per-frame scoring pipeline for one stream.
pub fn infer_frames<F: Scalar>(
    model: &Model<F>,
    stream: &Tensor<F>,
    cfg: &WindowConfig,
) -> Result<Vec<FrameScore<F>>> {
    let windows = score_stream(model, stream, cfg)?;
    score_frames(&windows, cfg, stream.shape()[0])
}

/// Caregiver-facing category of an inferred activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Category {
    Alert,
    ServiceRequest,
    Info,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Alert => "ALERT",
            Category::ServiceRequest => "SERVICE_REQUEST",
            Category::Info => "INFO",
        })
    }
}

/// Maps activity class names to caregiver categories. Explicit overrides
/// win; otherwise names starting with `fall` raise an alert, names
/// starting with `call` or `request` ask for service, and everything else
/// is informational.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryMap {
    #[serde(default)]
    pub overrides: BTreeMap<String, Category>,
}

impl CategoryMap {
    pub fn category_for(&self, class_name: &str) -> Category {
        if let Some(c) = self.overrides.get(class_name) {
            return *c;
        }
        if class_name.starts_with("fall") {
            Category::Alert
        } else if class_name.starts_with("call") || class_name.starts_with("request") {
            Category::ServiceRequest
        } else {
            Category::Info
        }
    }
}

/// One recognized activity segment. Carries only the inference — class
/// name, confidence, category — never pixel data; no tensor-typed field
/// exists on this type, which is what lets it cross the home boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceEvent {
    pub stream_id: String,
    /// Inclusive frame range.
    pub start: usize,
    pub end: usize,
    pub activity: String,
    /// Mean predicted-class score over the range.
    pub confidence: f64,
    pub category: Category,
    /// Simulation tick at which the event was emitted.
    pub tick: u64,
}

impl InferenceEvent {
    /// One JSON object per line; confidence fixed to 6 decimal places.
    pub fn to_json_line(&self) -> String {
        format!(
            r#"{{"stream_id":{},"start":{},"end":{},"activity":{},"confidence":{:.6},"category":"{}","tick":{}}}"#,
            serde_json::to_string(&self.stream_id).expect("strings serialize"),
            self.start,
            self.end,
            serde_json::to_string(&self.activity).expect("strings serialize"),
            self.confidence,
            self.category,
            self.tick,
        )
    }
}

/// Merges per-frame predictions into events: consecutive frames sharing a
/// predicted class become one event whose confidence is the mean
/// predicted-class score over the run. Event ranges partition `[0, T−1]`.
pub fn events_from_frames<F: Scalar>(
    frames: &[FrameScore<F>],
    stream_id: &str,
    class_names: &[String],
    categories: &CategoryMap,
    tick: u64,
) -> Result<Vec<InferenceEvent>> {
    let mut events = Vec::new();
    let mut run_start = 0usize;
    for i in 0..frames.len() {
        let class = frames[i].predicted_class;
        if class >= class_names.len() {
            return Err(Error::InvalidClassIndex {
                index: class,
                num_classes: class_names.len(),
            });
        }
        let run_ends = i + 1 == frames.len() || frames[i + 1].predicted_class != class;
        if !run_ends {
            continue;
        }
        let run = &frames[run_start..=i];
        let confidence = run
            .iter()
            .map(|f| f.score.probs()[class].to_f64_lossy())
            .sum::<f64>()
            / run.len() as f64;
        let activity = class_names[class].clone();
        events.push(InferenceEvent {
            stream_id: stream_id.to_string(),
            start: frames[run_start].frame_index,
            end: frames[i].frame_index,
            category: categories.category_for(&activity),
            activity,
            confidence,
            tick,
        });
        run_start = i + 1;
    }
    Ok(events)
}

/// End-to-end recognition for one stream: window, score, aggregate, merge.
pub fn run_stream<F: Scalar>(
    model: &Model<F>,
    stream_id: &str,
    stream: &Tensor<F>,
    cfg: &WindowConfig,
    class_names: &[String],
    categories: &CategoryMap,
    tick: u64,
) -> Result<Vec<InferenceEvent>> {
    if class_names.len() != model.num_classes() {
        return Err(Error::ClassCountMismatch {
            model: model.num_classes(),
            labels: class_names.len(),
        });
    }
    let frames = infer_frames(model, stream, cfg)?;
    events_from_frames(&frames, stream_id, class_names, categories, tick)
}
