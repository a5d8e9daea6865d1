//! Acceptance suite: one test per release criterion, each printing a
//! verdict line (visible under `--nocapture`). Numeric tolerances are
//! stated inline next to each assertion.
//!
//! The long-running criteria share a mutex so their in-test runtime
//! budgets are measured without interference from parallel test threads.

mod common;

use std::collections::BTreeSet;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use rand::Rng;

use edgecare_core::datagen::{
    default_source_spec, default_target_spec, generate, segments_for_windows, split, LabeledStream,
};
use edgecare_core::nn::{cross_entropy_loss, softmax, ProbabilityVector, TrainStats};
use edgecare_core::rng::{seeded, sub_seed};
use edgecare_core::sim::{default_scenario, run_simulation, MessageKind, SimMode, Zone};
use edgecare_core::stream::{evaluate, FrameScore};
use edgecare_core::tensor::Tensor;
use edgecare_core::transfer::arch::{preset_policy, ArchConfig};
use edgecare_core::transfer::{
    apply_freeze, fine_tune, realign_head, Dataset, FineTuneConfig, FreezePolicy, ModelCheckpoint,
    Provenance,
};
use edgecare_core::{PipelineModel, Value};

static HEAVY: Mutex<()> = Mutex::new(());

/// Serializes the expensive criteria; a poisoned lock (an earlier heavy
/// test failed) must not cascade into spurious failures here.
fn heavy_lock() -> MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(name: &str, detail: String) {
    println!("acceptance {name}: PASS — {detail}");
}

/// Criterion 1 — backprop gradients match central finite differences
/// (h = 1e-5, f64) within relative error 1e-4 on 20 seeded random models
/// covering every layer kind, in under 60 s.
#[test]
fn criterion_01_gradients_match_finite_differences() {
    let _guard = heavy_lock();
    let start = Instant::now();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let (model, batch, labels) = common::random_small_model(1000 + seed);
        let err = common::fd_max_relative_error(&model, &batch, &labels, h);
        assert!(
            err < 1e-4,
            "seed {seed}: max relative gradient error {err:.3e} >= 1e-4"
        );
        worst = worst.max(err);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "gradient check took {elapsed:.1}s (limit 60s)");
    verdict(
        "criterion 1 (gradient correctness)",
        format!("20 models, max relative error {worst:.3e} < 1e-4, {elapsed:.1}s < 60s"),
    );
}

/// Criterion 2 — softmax normalization within 1e-9 and shift-invariance
/// within 1e-12 over 1000 random logit vectors, including magnitude 1e3.
#[test]
fn criterion_02_softmax_normalization_and_shift_invariance() {
    let mut rng = seeded(2002);
    let magnitudes = [1.0, 10.0, 1000.0];
    let mut worst_norm = 0.0f64;
    let mut worst_shift = 0.0f64;
    for case in 0..1000 {
        let m = magnitudes[case % magnitudes.len()];
        let dim = rng.random_range(2..=10);
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-m..m)).collect();

        let p = softmax(&v);
        let norm_err = (p.probs().iter().sum::<f64>() - 1.0).abs();
        assert!(norm_err <= 1e-9, "case {case}: sum off by {norm_err:.3e}");
        worst_norm = worst_norm.max(norm_err);

        for shift in [rng.random_range(-m..m), 1000.0, -1000.0] {
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let q = softmax(&shifted);
            for (a, b) in p.probs().iter().zip(q.probs()) {
                let d = (a - b).abs();
                assert!(d <= 1e-12, "case {case}: shift {shift} moved a score by {d:.3e}");
                worst_shift = worst_shift.max(d);
            }
        }
    }
    verdict(
        "criterion 2 (softmax)",
        format!(
            "1000 vectors incl. magnitude 1e3: worst normalization {worst_norm:.2e} <= 1e-9, \
             worst shift drift {worst_shift:.2e} <= 1e-12"
        ),
    );
}

/// Criterion 3 — loss anchors: one-hot-correct gives 0; uniform over
/// C = 3 gives ln 3, both within 1e-12.
#[test]
fn criterion_03_loss_anchors() {
    let onehot = ProbabilityVector::new(vec![0.0f64, 1.0, 0.0]).unwrap();
    let zero = cross_entropy_loss(&onehot, 1).unwrap();
    assert!(zero.abs() <= 1e-12, "one-hot loss {zero:.3e}");

    let third = 1.0f64 / 3.0;
    let uniform = ProbabilityVector::new(vec![third, third, third]).unwrap();
    // ln 3 frozen from a 40-digit evaluation.
    let ln3 = 1.098612288668109691395245f64;
    let got = cross_entropy_loss(&uniform, 0).unwrap();
    assert!((got - ln3).abs() <= 1e-12, "uniform loss {got} vs ln3 {ln3}");
    verdict(
        "criterion 3 (loss anchors)",
        format!("one-hot → {zero:.1e}, uniform C=3 → ln3 + {:.1e}", got - ln3),
    );
}

/// Criterion 4 — frame scores equal the brute-force covering-window
/// average on 200 randomized (T ≤ 64, W ≤ 16, S ≤ W) cases, exactly.
#[test]
fn criterion_04_frame_scores_equal_covering_window_oracle() {
    use edgecare_core::stream::{score_frames, WindowConfig};
    let mut rng = seeded(4004);
    let mut frames_checked = 0usize;
    for case in 0..200 {
        let w = rng.random_range(1..=16);
        let s = rng.random_range(1..=w);
        let t = rng.random_range(w..=64);
        let c = rng.random_range(2..=5);
        let cfg = WindowConfig::new(w, s).unwrap();
        let starts = cfg.window_starts(t).unwrap();
        let scored: Vec<(usize, ProbabilityVector<f64>)> = starts
            .iter()
            .map(|&t1| (t1, ProbabilityVector::new(common::random_probs(&mut rng, c)).unwrap()))
            .collect();

        let got = score_frames(&scored, &cfg, t).unwrap();
        let raw: Vec<(usize, Vec<f64>)> =
            scored.iter().map(|(t1, p)| (*t1, p.probs().to_vec())).collect();
        let want = common::oracle_frame_scores(&raw, w, t);
        for (frame, (probs, n)) in got.iter().zip(&want) {
            assert_eq!(
                frame.score.probs(),
                &probs[..],
                "case {case} (T={t} W={w} S={s}) frame {}: scores differ from oracle",
                frame.frame_index
            );
            assert_eq!(frame.num_windows, *n);
            frames_checked += 1;
        }
    }
    verdict(
        "criterion 4 (covering-window equivalence)",
        format!("200 cases, {frames_checked} frames bit-identical to the oracle"),
    );
}

/// Criterion 5 — freeze budgets equal element-enumeration counts on 20
/// random models; case1 > case2 > case3 trainable on the reference
/// architecture; 264369/1223373 = 0.2161 ± 0.0001.
#[test]
fn criterion_05_freeze_arithmetic() {
    let mut rng = seeded(5005);
    for i in 0..20u64 {
        let (model, _, _) = common::random_small_model(5000 + i);
        let head_block = model.layer(model.head_name()).unwrap().spec.block_id;

        let blocks: Vec<usize> = model
            .layers()
            .iter()
            .map(|l| l.spec.block_id)
            .filter(|&b| b != head_block)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|_| rng.random_bool(0.5))
            .collect();
        let names: Vec<String> = model
            .layers()
            .iter()
            .map(|l| l.name().to_string())
            .filter(|n| n != model.head_name())
            .filter(|_| rng.random_bool(0.5))
            .collect();

        for policy in [
            FreezePolicy::none(),
            FreezePolicy::freeze_blocks(blocks),
            FreezePolicy::freeze_layers(names),
        ] {
            let plan = policy.plan(&model).unwrap();
            let budget = apply_freeze(&model, &policy).unwrap();
            let (trainable, frozen) = common::enumerated_budget(&model, &plan.frozen);
            assert_eq!(budget.trainable, trainable, "model {i}: trainable mismatch");
            assert_eq!(budget.frozen, frozen, "model {i}: frozen mismatch");
            assert_eq!(budget.total, trainable + frozen, "model {i}: total mismatch");
        }
    }

    let reference: PipelineModel = ArchConfig::new(3, 16, 16, 5).build(2).unwrap();
    let b1 = apply_freeze(&reference, &preset_policy("case1").unwrap()).unwrap();
    let b2 = apply_freeze(&reference, &preset_policy("case2").unwrap()).unwrap();
    let b3 = apply_freeze(&reference, &preset_policy("case3").unwrap()).unwrap();
    assert!(
        b1.trainable > b2.trainable && b2.trainable > b3.trainable,
        "preset ordering violated: {} / {} / {}",
        b1.trainable,
        b2.trainable,
        b3.trainable
    );
    assert_eq!(b1.total, b2.total);
    assert_eq!(b2.total, b3.total);

    let published_fraction = 264369.0f64 / 1223373.0;
    assert!(
        (published_fraction - 0.2161).abs() <= 0.0001,
        "264369/1223373 = {published_fraction} not within 0.2161 ± 0.0001"
    );
    verdict(
        "criterion 5 (freeze arithmetic)",
        format!(
            "20 models × 3 policies equal enumeration; presets {}/{}/{} trainable of {}; \
             264369/1223373 = {published_fraction:.6}",
            b1.trainable, b2.trainable, b3.trainable, b1.total
        ),
    );
}

fn small_target_datasets(seed: u64) -> (Dataset<Value>, Dataset<Value>, Vec<String>) {
    let spec = default_target_spec();
    let segments = segments_for_windows(3, 6, 8, sub_seed(seed, "segs"));
    let stream: LabeledStream<Value> = generate(&spec, &segments).unwrap();
    let (train, holdout) = split(&stream, 0.75, 8, sub_seed(seed, "split")).unwrap();
    (
        Dataset::new(train.frames, train.labels).unwrap(),
        Dataset::new(holdout.frames, holdout.labels).unwrap(),
        spec.class_names(),
    )
}

/// Criterion 6 — after a 10-epoch fine-tune under the case2 and case3
/// presets, every frozen tensor's hash is unchanged (running statistics
/// included).
#[test]
fn criterion_06_frozen_tensors_unchanged_after_fine_tune() {
    let _guard = heavy_lock();
    let (train, holdout, class_names) = small_target_datasets(8);
    let model: PipelineModel = ArchConfig::new(3, 16, 16, 3).build(sub_seed(8, "init")).unwrap();
    let cfg = FineTuneConfig {
        epochs: 10,
        batch_size: 16,
        learning_rate: 0.05,
        seed: sub_seed(8, "ft"),
        target_classes: class_names,
    };

    let mut frozen_checked = 0usize;
    for preset in ["case2", "case3"] {
        let policy = preset_policy(preset).unwrap();
        let plan = policy.plan(&model).unwrap();
        let hashes_of = |m: &PipelineModel| -> Vec<(String, Vec<String>)> {
            m.layers()
                .iter()
                .filter(|l| plan.frozen.contains(l.name()))
                .map(|l| {
                    let h = l.params.all().iter().map(|t| t.content_hash()).collect();
                    (l.name().to_string(), h)
                })
                .collect()
        };
        let before = hashes_of(&model);
        let (tuned, history) = fine_tune(&model, &policy, &train, &holdout, &cfg).unwrap();
        assert_eq!(history.len(), 10);
        let after = hashes_of(&tuned);
        assert_eq!(before, after, "{preset}: a frozen tensor changed");
        frozen_checked += before.iter().map(|(_, h)| h.len()).sum::<usize>();

        // The run must not be vacuous: some trainable tensor did move.
        let moved = model
            .layers()
            .iter()
            .zip(tuned.layers())
            .filter(|(a, _)| !plan.frozen.contains(a.name()))
            .any(|(a, b)| {
                a.params
                    .all()
                    .iter()
                    .zip(b.params.all())
                    .any(|(x, y)| x.content_hash() != y.content_hash())
            });
        assert!(moved, "{preset}: no trainable tensor changed in 10 epochs");
    }
    verdict(
        "criterion 6 (freeze immutability)",
        format!("case2+case3, 10 epochs each: {frozen_checked} frozen tensors bit-identical"),
    );
}

/// Accuracy at the epoch fine_tune selects: the first minimum of holdout loss.
fn selected_accuracy(history: &[TrainStats]) -> f64 {
    let mut best = &history[0];
    for s in &history[1..] {
        if s.mean_loss < best.mean_loss {
            best = s;
        }
    }
    best.accuracy
}

/// Criterion 7 — transfer benefit at desk scale: the pre-trained model
/// fine-tuned under case3 reaches ≥ 0.90 holdout frame accuracy on the
/// target task; a randomly initialized model under the identical trainable
/// mask reaches ≤ 0.60. Means over 5 seeds, total runtime < 5 min.
#[test]
fn criterion_07_transfer_beats_random_under_identical_budget() {
    let _guard = heavy_lock();
    let start = Instant::now();

    // One cloud pre-training run on the 5-class source domain.
    let source = default_source_spec();
    let src_segments = segments_for_windows(5, 24, 8, sub_seed(42, "src-segs"));
    let src_stream: LabeledStream<Value> = generate(&source, &src_segments).unwrap();
    let (src_train, src_holdout) = split(&src_stream, 0.8, 8, sub_seed(42, "src-split")).unwrap();
    let src_train = Dataset::new(src_train.frames, src_train.labels).unwrap();
    let src_holdout = Dataset::new(src_holdout.frames, src_holdout.labels).unwrap();
    let init: PipelineModel = ArchConfig::new(3, 16, 16, 5).build(sub_seed(42, "init")).unwrap();
    let pretrain_cfg = FineTuneConfig {
        epochs: 14,
        batch_size: 16,
        learning_rate: 0.08,
        seed: sub_seed(42, "pretrain"),
        target_classes: source.class_names(),
    };
    let (pretrained, pre_history) = fine_tune(
        &init,
        &FreezePolicy::none(),
        &src_train,
        &src_holdout,
        &pretrain_cfg,
    )
    .unwrap();
    let ckpt = ModelCheckpoint::from_model(
        &pretrained,
        source.class_names(),
        Provenance {
            trained_on: source.fingerprint(),
            epochs: pretrain_cfg.epochs,
            seed: pretrain_cfg.seed,
        },
    )
    .unwrap();

    // Five paired fine-tuning runs on the 3-class target domain.
    let target = default_target_spec();
    let policy = preset_policy("case3").unwrap();
    let mut transfer_accs = Vec::new();
    let mut random_accs = Vec::new();
    for ft_seed in [101u64, 102, 103, 104, 105] {
        let segments = segments_for_windows(3, 30, 8, sub_seed(ft_seed, "tgt-segs"));
        let stream: LabeledStream<Value> = generate(&target, &segments).unwrap();
        let (train, holdout) = split(&stream, 0.8, 8, sub_seed(ft_seed, "tgt-split")).unwrap();
        let train = Dataset::new(train.frames, train.labels).unwrap();
        let holdout = Dataset::new(holdout.frames, holdout.labels).unwrap();
        let cfg = FineTuneConfig {
            epochs: 6,
            batch_size: 16,
            learning_rate: 0.05,
            seed: sub_seed(ft_seed, "ft"),
            target_classes: target.class_names(),
        };

        let warm: PipelineModel =
            realign_head(&ckpt, &target.class_names(), sub_seed(ft_seed, "head")).unwrap();
        let (_, warm_history) = fine_tune(&warm, &policy, &train, &holdout, &cfg).unwrap();
        transfer_accs.push(selected_accuracy(&warm_history));

        let cold: PipelineModel = ArchConfig::new(3, 16, 16, 3)
            .build(sub_seed(ft_seed, "rand-init"))
            .unwrap();
        let (_, cold_history) = fine_tune(&cold, &policy, &train, &holdout, &cfg).unwrap();
        random_accs.push(selected_accuracy(&cold_history));
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let transfer_mean = mean(&transfer_accs);
    let random_mean = mean(&random_accs);
    let elapsed = start.elapsed().as_secs_f64();

    assert!(
        transfer_mean >= 0.90,
        "transferred model mean accuracy {transfer_mean:.3} < 0.90 ({transfer_accs:?})"
    );
    assert!(
        random_mean <= 0.60,
        "random-init mean accuracy {random_mean:.3} > 0.60 ({random_accs:?})"
    );
    assert!(elapsed < 300.0, "transfer benchmark took {elapsed:.0}s (limit 300s)");
    verdict(
        "criterion 7 (transfer benefit)",
        format!(
            "pretrain holdout acc {:.3}; transfer mean {transfer_mean:.3} >= 0.90 \
             {transfer_accs:?}, random mean {random_mean:.3} <= 0.60 {random_accs:?}, \
             {elapsed:.0}s < 300s",
            selected_accuracy(&pre_history)
        ),
    );
}

/// Criterion 8 — over the default full simulation, no FRAME_BATCH is
/// delivered to an OUTSIDE node, and boundary traffic is under 1% of the
/// raw-streaming baseline on identical frames.
#[test]
fn criterion_08_privacy_boundary_and_traffic_ratio() {
    let _guard = heavy_lock();
    let scenario = default_scenario();
    let private = run_simulation::<Value>(&scenario, 77, SimMode::Private).unwrap();
    let baseline = run_simulation::<Value>(&scenario, 77, SimMode::RawStreaming).unwrap();

    for out in [&private, &baseline] {
        let linked: u64 = out.ledger.per_link_bytes.values().sum();
        assert_eq!(linked, out.ledger.total_bytes, "ledger does not balance");
    }

    let leaked = private
        .log
        .iter()
        .filter(|e| e.kind == MessageKind::FrameBatch && e.dst.zone == Zone::Outside)
        .count();
    assert_eq!(leaked, 0, "{leaked} FRAME_BATCH messages crossed the boundary");

    let raw_outside = baseline
        .log
        .iter()
        .filter(|e| e.kind == MessageKind::FrameBatch && e.dst.zone == Zone::Outside)
        .count();
    assert!(raw_outside > 0, "baseline never streamed raw frames outside");

    let ratio = private.ledger.boundary_bytes as f64 / baseline.ledger.boundary_bytes as f64;
    assert!(
        ratio < 0.01,
        "boundary bytes {} vs baseline {} → ratio {ratio:.4} >= 1%",
        private.ledger.boundary_bytes,
        baseline.ledger.boundary_bytes
    );
    verdict(
        "criterion 8 (privacy)",
        format!(
            "0 FRAME_BATCH outside; boundary {}B vs baseline {}B → ratio {:.4}% < 1%",
            private.ledger.boundary_bytes,
            baseline.ledger.boundary_bytes,
            100.0 * ratio
        ),
    );
}

/// Criterion 9 — identical configs and seeds reproduce bit-identical
/// checkpoints, event logs, ledgers, and reports.
#[test]
fn criterion_09_pipeline_is_bitwise_deterministic() {
    let _guard = heavy_lock();

    // Checkpoint path: data → train → serialize, twice.
    let make_checkpoint = || {
        let (train, holdout, class_names) = small_target_datasets(31);
        let model: PipelineModel =
            ArchConfig::new(3, 16, 16, 3).build(sub_seed(31, "init")).unwrap();
        let cfg = FineTuneConfig {
            epochs: 2,
            batch_size: 16,
            learning_rate: 0.05,
            seed: sub_seed(31, "ft"),
            target_classes: class_names.clone(),
        };
        let (tuned, _) = fine_tune(&model, &FreezePolicy::none(), &train, &holdout, &cfg).unwrap();
        ModelCheckpoint::from_model(
            &tuned,
            class_names,
            Provenance {
                trained_on: "determinism-check".into(),
                epochs: 2,
                seed: 31,
            },
        )
        .unwrap()
        .to_bytes()
        .unwrap()
    };
    let ckpt_a = make_checkpoint();
    let ckpt_b = make_checkpoint();
    assert_eq!(ckpt_a, ckpt_b, "checkpoint bytes differ between identical runs");

    // Simulation path: a reduced scenario, twice, compared field by field
    // and as one serialized artifact.
    let mut scenario = default_scenario();
    scenario.pretrain.epochs = 2;
    scenario.pretrain.windows_per_class = 10;
    scenario.finetune.epochs = 2;
    scenario.finetune.windows_per_class = 10;
    scenario.live.segments_per_class = 1;
    scenario.live.segment_len = 24;

    let run_a = run_simulation::<Value>(&scenario, 55, SimMode::Private).unwrap();
    let run_b = run_simulation::<Value>(&scenario, 55, SimMode::Private).unwrap();

    assert_eq!(run_a.log_lines(), run_b.log_lines(), "event logs differ");
    assert_eq!(
        serde_json::to_string(&run_a.ledger).unwrap(),
        serde_json::to_string(&run_b.ledger).unwrap(),
        "ledgers differ"
    );
    assert_eq!(
        serde_json::to_string(&run_a.report).unwrap(),
        serde_json::to_string(&run_b.report).unwrap(),
        "reports differ"
    );
    let all_a = serde_json::to_string(&run_a).unwrap();
    let all_b = serde_json::to_string(&run_b).unwrap();
    assert_eq!(all_a, all_b, "full outputs differ");
    verdict(
        "criterion 9 (determinism)",
        format!(
            "checkpoint {}B and simulation output {}B bit-identical across reruns",
            ckpt_a.len(),
            all_a.len()
        ),
    );
}

/// Criterion 10 — mAP matches a brute-force precision-envelope oracle on
/// 100 random small cases within 1e-9, and is exactly 1.0 on perfect
/// predictions.
#[test]
fn criterion_10_mean_average_precision_matches_oracle() {
    let mut rng = seeded(1010);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let t = rng.random_range(1..=50);
        let c = rng.random_range(2..=4);
        let names: Vec<String> = (0..c).map(|i| format!("c{i}")).collect();
        let labels: Vec<usize> = (0..t).map(|_| rng.random_range(0..c)).collect();
        let probs: Vec<Vec<f64>> = (0..t).map(|_| common::random_probs(&mut rng, c)).collect();
        let frames: Vec<FrameScore<Value>> = probs
            .iter()
            .enumerate()
            .map(|(i, p)| FrameScore {
                frame_index: i,
                score: ProbabilityVector::new(p.clone()).unwrap(),
                num_windows: 1,
                predicted_class: common::argmax(p),
            })
            .collect();

        let report = evaluate(&frames, &labels, &names).unwrap();
        let want = common::oracle_mean_ap(&probs, &labels, c);
        let diff = (report.mean_ap - want).abs();
        assert!(
            diff <= 1e-9,
            "case {case} (T={t} C={c}): mAP {} vs oracle {want} (diff {diff:.2e})",
            report.mean_ap
        );
        worst = worst.max(diff);

        for (class, name) in names.iter().enumerate() {
            if let Some(&ap) = report.per_class_ap.get(name) {
                let scores: Vec<f64> = probs.iter().map(|p| p[class]).collect();
                let positive: Vec<bool> = labels.iter().map(|&l| l == class).collect();
                let class_want = common::oracle_average_precision(&scores, &positive);
                assert!(
                    (ap - class_want).abs() <= 1e-9,
                    "case {case} class {name}: AP {ap} vs oracle {class_want}"
                );
            } else {
                assert!(
                    !labels.contains(&class),
                    "case {case}: present class {name} missing from report"
                );
            }
        }
    }

    // Perfect predictions: one-hot scores at the true class.
    let labels = vec![0usize, 1, 2, 1, 0, 2, 2, 1];
    let names: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
    let frames: Vec<FrameScore<Value>> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let mut p = vec![0.0; 3];
            p[l] = 1.0;
            FrameScore {
                frame_index: i,
                score: ProbabilityVector::new(p).unwrap(),
                num_windows: 1,
                predicted_class: l,
            }
        })
        .collect();
    let report = evaluate(&frames, &labels, &names).unwrap();
    assert_eq!(report.mean_ap, 1.0, "perfect predictions must give exactly 1.0");
    assert_eq!(report.frame_accuracy, 1.0);

    verdict(
        "criterion 10 (mAP correctness)",
        format!("100 cases within 1e-9 of oracle (worst {worst:.2e}); perfect input → exactly 1.0"),
    );
}

/// Tensor streams feed the pipeline end to end; a trivial smoke check that
/// the acceptance fixtures themselves are well-formed.
#[test]
fn fixtures_are_valid() {
    let (model, batch, labels) = common::random_small_model(1);
    assert_eq!(batch.shape()[0], labels.len());
    let y = model.forward(&batch).unwrap();
    assert_eq!(y.shape(), &[labels.len(), model.num_classes()]);
    assert!(Tensor::from_vec(&[2, 2], vec![1.0f64; 4]).unwrap().all_finite());
}
