//! Seeded synthetic activity streams: a moving intensity blob per activity
//! class rendered onto a noisy background. Stands in for real sensor
//! footage so training, fine-tuning, and the simulation are hermetic.

pub mod file;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{seeded, sub_seed};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use file::{load_stream, save_stream, STREAM_MAGIC, STREAM_VERSION};

/// How a class's blob moves across a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    /// Blob stays put: resting, sitting.
    Static,
    /// Blob crosses the frame left to right: walking.
    LinearDrift,
    /// Blob sways around the center: gesturing, exercising.
    Oscillation,
    /// Blob drops and flattens: the fall analogue.
    Collapse,
}

/// One synthetic activity: a named blob with a motion pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityClass {
    pub name: String,
    pub motion_kind: MotionKind,
    /// Peak blob brightness above background, in (0, 1].
    pub intensity: f64,
    /// Blob radius in pixels.
    pub blob_size: usize,
}

/// Full recipe for a stream corpus. Equal specs produce bitwise-equal
/// streams; the fingerprint names the recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub classes: Vec<ActivityClass>,
    pub frame_h: usize,
    pub frame_w: usize,
    /// 1 for depth/thermal-like frames, 3 for RGB-like.
    pub channels: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

const BACKGROUND: f64 = 0.08;

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidGeneratorSpec(msg));
        if self.classes.len() < 2 {
            return fail(format!("need at least 2 classes, got {}", self.classes.len()));
        }
        if self.frame_h < 16 || self.frame_w < 16 {
            return fail(format!(
                "frame dims must be at least 16x16, got {}x{}",
                self.frame_h, self.frame_w
            ));
        }
        if self.channels != 1 && self.channels != 3 {
            return fail(format!("channels must be 1 or 3, got {}", self.channels));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return fail(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        let mut names = std::collections::BTreeSet::new();
        for class in &self.classes {
            if !names.insert(class.name.as_str()) {
                return fail(format!("duplicate class name `{}`", class.name));
            }
            if !(class.intensity > 0.0 && class.intensity <= 1.0) {
                return fail(format!(
                    "class `{}` intensity must be in (0, 1], got {}",
                    class.name, class.intensity
                ));
            }
            if class.blob_size == 0 {
                return fail(format!("class `{}` blob_size must be positive", class.name));
            }
        }
        Ok(())
    }

    /// Content hash of the recipe (SHA-256 over its canonical JSON form).
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&bytes);
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }
}

/// A generated frame sequence with per-frame labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream<F> {
    /// `[T, channels, H, W]`, values in `[0, 1]`.
    pub frames: Tensor<F>,
    pub labels: Vec<usize>,
    pub spec_fingerprint: String,
}

impl<F: Scalar> LabeledStream<F> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Blob geometry for one frame of a segment; `t` runs 0..1 over the segment.
// Each motion kind owns a distinct lane in the frame, so kinds are told
// apart by where the blob sits and how it deforms, not by brightness or
// size. Identically rendered blobs on different lanes stay separable.
/// Orientation of the stripe pattern carried on the subject's silhouette,
/// in radians from vertical; `None` for an unpatterned (resting) silhouette.
/// Upright activity reads as vertical striping, a fall as horizontal, the
/// bobbing sway as diagonal — a posture cue that sits in the texture, not
/// in where the blob is.
fn stripe_angle(kind: MotionKind) -> Option<f64> {
    match kind {
        MotionKind::Static => None,
        MotionKind::LinearDrift => Some(0.0),
        MotionKind::Oscillation => Some(std::f64::consts::FRAC_PI_4),
        MotionKind::Collapse => Some(std::f64::consts::FRAC_PI_2),
    }
}

const STRIPE_PERIOD: f64 = 3.0;
const STRIPE_DEPTH: f64 = 0.6;

fn blob_at(kind: MotionKind, t: f64, h: f64, w: f64, r0: f64) -> (f64, f64, f64, f64) {
    match kind {
        MotionKind::Static => (0.5 * h, 0.5 * w, r0, r0),
        // Walks the midline left to right.
        MotionKind::LinearDrift => (0.5 * h, (0.2 + 0.6 * t) * w, r0, r0),
        // Same walk with a slight vertical bob.
        MotionKind::Oscillation => (
            (0.5 + 0.06 * (4.0 * std::f64::consts::PI * t).sin()) * h,
            (0.2 + 0.6 * t) * w,
            r0,
            r0,
        ),
        // The fall: the silhouette sinks below the midline while it
        // flattens and widens.
        MotionKind::Collapse => (
            (0.45 + 0.18 * t) * h,
            (0.2 + 0.6 * t) * w,
            r0 * (1.0 - 0.5 * t),
            r0 * (1.0 + 0.5 * t),
        ),
    }
}

/// Per-channel brightness tint on RGB-like input, identical for every
/// class so color statistics carry no label signal — classes must be told
/// apart by where the blob is and what shape it takes, not what color.
/// Single-channel input sees full gain.
fn channel_gain(channels: usize, channel: usize) -> f64 {
    if channels == 1 {
        return 1.0;
    }
    const PATTERN: [f64; 3] = [1.0, 0.7, 0.45];
    PATTERN[channel % PATTERN.len()]
}

/// Renders a labeled stream: one blob segment per `(class index, duration)`
/// entry, Gaussian pixel noise of `spec.noise_sigma`, all values clamped to
/// `[0, 1]`. Deterministic in (spec, segments).
///
/// Every segment also carries three stationary *distractors* — small
/// bright blobs at segment-random positions, standing in for furniture,
/// pets, or reflections. Their positions, sizes, and brightness are
/// independent of the activity label, so they contribute no class signal;
/// telling the subject from the clutter is part of what the classifier has
/// to learn.
pub fn generate<F: Scalar>(
    spec: &GeneratorSpec,
    segments: &[(usize, usize)],
) -> Result<LabeledStream<F>> {
    spec.validate()?;
    if segments.is_empty() {
        return Err(Error::InvalidGeneratorSpec("no segments requested".into()));
    }
    for &(class, duration) in segments {
        if class >= spec.classes.len() {
            return Err(Error::InvalidClassIndex {
                index: class,
                num_classes: spec.classes.len(),
            });
        }
        if duration == 0 {
            return Err(Error::InvalidGeneratorSpec("segment duration must be positive".into()));
        }
    }

    let (h, w, c) = (spec.frame_h, spec.frame_w, spec.channels);
    let total: usize = segments.iter().map(|(_, d)| d).sum();
    let mut data: Vec<F> = Vec::with_capacity(total * c * h * w);
    let mut labels = Vec::with_capacity(total);
    let mut rng = seeded(sub_seed(spec.seed, "stream"));
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).expect("sigma validated finite"))
    } else {
        None
    };

    for &(class_index, duration) in segments {
        let class = &spec.classes[class_index];
        let r0 = class.blob_size as f64;
        let stripe = stripe_angle(class.motion_kind).map(|a| (a.sin(), a.cos()));
        // Stationary for the segment: drawn up front, before the frames.
        let clutter: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                let d_cy = rng.random_range(0.15..0.85) * h as f64;
                let d_cx = rng.random_range(0.15..0.85) * w as f64;
                let d_r = rng.random_range(1.0..1.6);
                let d_peak = rng.random_range(0.5..1.0);
                (d_cy, d_cx, d_r, d_peak)
            })
            .collect();
        for frame in 0..duration {
            let t = if duration > 1 {
                frame as f64 / (duration - 1) as f64
            } else {
                0.0
            };
            let (cy, cx, ry, rx) = blob_at(class.motion_kind, t, h as f64, w as f64, r0);
            for ch in 0..c {
                let gain = channel_gain(c, ch);
                // Spread the same luminous mass over the deformed shape, so
                // deformation shifts no class signal into total brightness.
                let amp = (r0 * r0) / (ry * rx);
                for y in 0..h {
                    for x in 0..w {
                        let dy = y as f64 - cy;
                        let dx = x as f64 - cx;
                        let shape = (-(dy * dy) / (2.0 * ry * ry) - (dx * dx) / (2.0 * rx * rx)).exp();
                        // Pattern phase is registered to the sensor grid,
                        // not the subject, so a fixed matched template sees
                        // the same phase wherever the subject stands.
                        let texture = match stripe {
                            Some((sin_a, cos_a)) => {
                                let u = x as f64 * cos_a + y as f64 * sin_a;
                                1.0 + STRIPE_DEPTH
                                    * (std::f64::consts::TAU * u / STRIPE_PERIOD).cos()
                            }
                            None => 1.0,
                        };
                        let mut lit = class.intensity * amp * shape * texture;
                        for &(d_cy, d_cx, d_r, d_peak) in &clutter {
                            let ddy = y as f64 - d_cy;
                            let ddx = x as f64 - d_cx;
                            lit += d_peak
                                * (-(ddy * ddy + ddx * ddx) / (2.0 * d_r * d_r)).exp();
                        }
                        let mut v = BACKGROUND + gain * lit;
                        if let Some(n) = &noise {
                            v += n.sample(&mut rng);
                        }
                        data.push(F::from_f64_lossy(v.clamp(0.0, 1.0)));
                    }
                }
            }
            labels.push(class_index);
        }
    }

    Ok(LabeledStream {
        frames: Tensor::from_vec(&[total, c, h, w], data).expect("counted during render"),
        labels,
        spec_fingerprint: spec.fingerprint(),
    })
}

/// Segment list giving `windows_per_class` segments of `window_len` frames
/// for every class, in a seed-shuffled interleaving so no class clusters at
/// either end of the stream.
pub fn segments_for_windows(
    num_classes: usize,
    windows_per_class: usize,
    window_len: usize,
    seed: u64,
) -> Vec<(usize, usize)> {
    let mut segments: Vec<(usize, usize)> = (0..num_classes)
        .flat_map(|k| std::iter::repeat_n((k, window_len), windows_per_class))
        .collect();
    let mut rng = seeded(sub_seed(seed, "segment-order"));
    for i in (1..segments.len()).rev() {
        let j = rng.random_range(0..=i);
        segments.swap(i, j);
    }
    segments
}

/// Splits a stream into train and holdout parts at tile granularity:
/// consecutive `window_len`-frame tiles are assigned whole to one side, so
/// no inference window ever straddles the split. Both parts must retain
/// every class present in the input.
pub fn split<F: Scalar>(
    stream: &LabeledStream<F>,
    train_fraction: f64,
    window_len: usize,
    seed: u64,
) -> Result<(LabeledStream<F>, LabeledStream<F>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::BadSplitFraction(train_fraction));
    }
    if window_len == 0 {
        return Err(Error::ZeroWindowParam);
    }
    let t = stream.len();
    let distinct: std::collections::BTreeSet<usize> = stream.labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::DegenerateStream);
    }
    let num_tiles = t.div_ceil(window_len);
    if num_tiles < 2 {
        return Err(Error::StreamShorterThanWindow {
            frames: t,
            window: 2 * window_len,
        });
    }

    let mut order: Vec<usize> = (0..num_tiles).collect();
    let mut rng = seeded(sub_seed(seed, "tile-split"));
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_train = ((train_fraction * num_tiles as f64).round() as usize).clamp(1, num_tiles - 1);
    let mut train_tiles: Vec<usize> = order[..n_train].to_vec();
    let mut holdout_tiles: Vec<usize> = order[n_train..].to_vec();
    // Keep each side in original temporal order.
    train_tiles.sort_unstable();
    holdout_tiles.sort_unstable();

    let assemble = |tiles: &[usize]| -> LabeledStream<F> {
        let parts: Vec<Tensor<F>> = tiles
            .iter()
            .map(|&tile| {
                let start = tile * window_len;
                let end = ((tile + 1) * window_len).min(t);
                stream.frames.slice_axis0(start, end)
            })
            .collect();
        let refs: Vec<&Tensor<F>> = parts.iter().collect();
        let labels = tiles
            .iter()
            .flat_map(|&tile| {
                let start = tile * window_len;
                let end = ((tile + 1) * window_len).min(t);
                stream.labels[start..end].iter().copied()
            })
            .collect();
        LabeledStream {
            frames: Tensor::concat_axis0(&refs).expect("tiles share frame dims"),
            labels,
            spec_fingerprint: stream.spec_fingerprint.clone(),
        }
    };
    let train = assemble(&train_tiles);
    let holdout = assemble(&holdout_tiles);

    for class in &distinct {
        for part in [&train, &holdout] {
            if !part.labels.contains(class) {
                return Err(Error::SplitClassEmpty(format!("class {class}")));
            }
        }
    }
    Ok((train, holdout))
}

/// Source-domain recipe: five activities on RGB-like frames, used for
/// cloud pre-training. Intensities scale as 1/blob_size² so every class
/// deposits roughly the same total brightness — no class is recognizable
/// from a global intensity average, only from blob position, spread, and
/// shape.
pub fn default_source_spec() -> GeneratorSpec {
    GeneratorSpec {
        classes: vec![
            ActivityClass {
                name: "resting".into(),
                motion_kind: MotionKind::Static,
                intensity: 0.4,
                blob_size: 3,
            },
            ActivityClass {
                name: "walking".into(),
                motion_kind: MotionKind::LinearDrift,
                intensity: 0.45,
                blob_size: 3,
            },
            ActivityClass {
                name: "stretching".into(),
                motion_kind: MotionKind::Oscillation,
                intensity: 0.3,
                blob_size: 4,
            },
            ActivityClass {
                name: "falling".into(),
                motion_kind: MotionKind::Collapse,
                intensity: 0.4,
                blob_size: 3,
            },
            ActivityClass {
                name: "pacing".into(),
                motion_kind: MotionKind::LinearDrift,
                intensity: 0.16,
                blob_size: 5,
            },
        ],
        frame_h: 16,
        frame_w: 16,
        channels: 3,
        noise_sigma: 0.06,
        seed: 1001,
    }
}

/// Target-domain recipe: the three activities the edge model must learn.
/// All three classes render the *same* blob — same size, same intensity —
/// and differ only in which lane it occupies and how it moves, so nothing
/// short of spatial structure separates them; heavier noise than the
/// source domain makes transfer genuinely cross-domain. Class names drive
/// the caregiver category defaults.
pub fn default_target_spec() -> GeneratorSpec {
    GeneratorSpec {
        classes: vec![
            ActivityClass {
                name: "walking".into(),
                motion_kind: MotionKind::LinearDrift,
                intensity: 0.4,
                blob_size: 3,
            },
            ActivityClass {
                name: "falling".into(),
                motion_kind: MotionKind::Collapse,
                intensity: 0.4,
                blob_size: 3,
            },
            ActivityClass {
                name: "call_for_help".into(),
                motion_kind: MotionKind::Oscillation,
                intensity: 0.4,
                blob_size: 3,
            },
        ],
        frame_h: 16,
        frame_w: 16,
        channels: 3,
        noise_sigma: 0.12,
        seed: 2002,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class_spec(noise_sigma: f64) -> GeneratorSpec {
        GeneratorSpec {
            classes: vec![
                ActivityClass {
                    name: "still".into(),
                    motion_kind: MotionKind::Static,
                    intensity: 0.9,
                    blob_size: 3,
                },
                ActivityClass {
                    name: "drop".into(),
                    motion_kind: MotionKind::Collapse,
                    intensity: 0.9,
                    blob_size: 4,
                },
            ],
            frame_h: 16,
            frame_w: 16,
            channels: 1,
            noise_sigma,
            seed: 7,
        }
    }

    #[test]
    fn static_noiseless_segments_repeat_frames() {
        let stream: LabeledStream<f64> =
            generate(&two_class_spec(0.0), &[(0, 4)]).unwrap();
        let first = stream.frames.index_axis0(0).to_vec();
        for i in 1..4 {
            assert_eq!(stream.frames.index_axis0(i), first.as_slice());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = two_class_spec(0.04);
        let segs = [(0usize, 5usize), (1, 6)];
        let a: LabeledStream<f64> = generate(&spec, &segs).unwrap();
        let b: LabeledStream<f64> = generate(&spec, &segs).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.spec_fingerprint, spec.fingerprint());
    }

    #[test]
    fn values_stay_in_unit_range_under_heavy_noise() {
        let spec = two_class_spec(0.8);
        let stream: LabeledStream<f64> = generate(&spec, &[(0, 3), (1, 3)]).unwrap();
        assert!(stream
            .frames
            .data()
            .iter()
            .all(|&v| (0.0..=1.0).contains(&v)));
    }

    /// Vertical extent of the moving subject in channel 0, isolated from
    /// the stationary clutter and background by differencing against a
    /// reference frame: rows where this frame is brighter by > 0.1.
    fn subject_bbox_height(frame: &[f64], reference: &[f64], h: usize, w: usize) -> usize {
        let mut rows: Vec<usize> = Vec::new();
        for y in 0..h {
            if (0..w).any(|x| frame[y * w + x] - reference[y * w + x] > 0.1) {
                rows.push(y);
            }
        }
        match (rows.first(), rows.last()) {
            (Some(a), Some(b)) => b - a + 1,
            _ => 0,
        }
    }

    #[test]
    fn collapse_blob_flattens_over_the_segment() {
        let stream: LabeledStream<f64> =
            generate(&two_class_spec(0.0), &[(1, 12)]).unwrap();
        let a = stream.frames.index_axis0(0);
        let b = stream.frames.index_axis0(11);
        let first = subject_bbox_height(a, b, 16, 16);
        let last = subject_bbox_height(b, a, 16, 16);
        assert!(
            last < first,
            "blob should flatten: first height {first}, last height {last}"
        );
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = two_class_spec(0.0);
        spec.classes[1].name = "still".into();
        assert!(matches!(
            generate::<f64>(&spec, &[(0, 2)]).unwrap_err(),
            Error::InvalidGeneratorSpec(_)
        ));
        let mut small = two_class_spec(0.0);
        small.frame_h = 8;
        assert!(generate::<f64>(&small, &[(0, 2)]).is_err());
        assert!(matches!(
            generate::<f64>(&two_class_spec(0.0), &[(5, 2)]).unwrap_err(),
            Error::InvalidClassIndex { index: 5, .. }
        ));
    }

    #[test]
    fn split_keeps_tiles_whole_and_classes_present() {
        let spec = two_class_spec(0.03);
        let segs = segments_for_windows(2, 10, 4, 3);
        let stream: LabeledStream<f64> = generate(&spec, &segs).unwrap();
        let (train, holdout) = split(&stream, 0.5, 4, 9).unwrap();
        assert_eq!(train.len() + holdout.len(), stream.len());
        assert_eq!(train.len() % 4, 0);
        // Histograms of the parts sum to the whole.
        for class in 0..2 {
            let whole = stream.labels.iter().filter(|&&l| l == class).count();
            let t = train.labels.iter().filter(|&&l| l == class).count();
            let h = holdout.labels.iter().filter(|&&l| l == class).count();
            assert_eq!(t + h, whole);
            assert!(t > 0 && h > 0);
        }
    }

    #[test]
    fn split_rejects_degenerate_and_bad_fractions() {
        let spec = two_class_spec(0.0);
        let single: LabeledStream<f64> = generate(&spec, &[(0, 12)]).unwrap();
        assert!(matches!(
            split(&single, 0.5, 4, 1).unwrap_err(),
            Error::DegenerateStream
        ));
        let both: LabeledStream<f64> = generate(&spec, &[(0, 8), (1, 8)]).unwrap();
        assert!(matches!(
            split(&both, 1.5, 4, 1).unwrap_err(),
            Error::BadSplitFraction(_)
        ));
    }

    #[test]
    fn balanced_split_of_100_tiles_is_50_50() {
        let spec = two_class_spec(0.02);
        let segs = segments_for_windows(2, 50, 4, 11);
        let stream: LabeledStream<f64> = generate(&spec, &segs).unwrap();
        let (train, holdout) = split(&stream, 0.5, 4, 2).unwrap();
        assert_eq!(train.len(), 200);
        assert_eq!(holdout.len(), 200);
    }

    #[test]
    fn fingerprints_differ_between_specs() {
        assert_ne!(
            default_source_spec().fingerprint(),
            default_target_spec().fingerprint()
        );
        assert_eq!(
            default_source_spec().fingerprint(),
            default_source_spec().fingerprint()
        );
    }
}
