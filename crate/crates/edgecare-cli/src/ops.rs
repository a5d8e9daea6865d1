//! Subcommand implementations. Each artifact-writing command follows the
//! same shape: resolve settings (JSON config plus flag overrides), hash
//! the inputs into a manifest, claim the output directory, run, write
//! artifacts, then write the manifest last so failed runs leave none.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use edgecare_core::datagen::{
    default_source_spec, default_target_spec, generate, load_stream, save_stream,
    segments_for_windows, split, GeneratorSpec, LabeledStream,
};
use edgecare_core::nn::TrainStats;
use edgecare_core::rng::sub_seed;
use edgecare_core::sim::{default_scenario, run_simulation, Scenario, SimMode};
use edgecare_core::stream::{
    evaluate, events_from_frames, infer_frames, CategoryMap, WindowConfig,
};
use edgecare_core::transfer::arch::{preset_policy, ArchConfig};
use edgecare_core::transfer::{
    apply_freeze, fine_tune, realign_head, Dataset, FineTuneConfig, FreezePolicy, ModelCheckpoint,
    ParameterBudget, Provenance,
};
use edgecare_core::{PipelineModel, Value};

use crate::manifest::{sha256_hex, RunManifest};
use crate::{classify, CliError, Common, Preset};

/// Published parameter counts for the three fine-tuning cases, printed
/// next to this build's numbers in every budget report.
const PUBLISHED_BUDGETS: &[(&str, u64, u64)] = &[
    ("case1", 1223373, 1223373),
    ("case2", 1223373, 497000),
    ("case3", 1223373, 264369),
];

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn hash_input(path: &Path, missing_is_config: bool) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| {
        let msg = format!("cannot read {}: {e}", path.display());
        if missing_is_config {
            CliError::Config(msg)
        } else {
            CliError::Data(msg)
        }
    })?;
    Ok(sha256_hex(&bytes))
}

fn require_out(common: &Common) -> Result<&Path, CliError> {
    common
        .out
        .as_deref()
        .ok_or_else(|| CliError::Config("this subcommand writes artifacts; pass --out DIR".into()))
}

fn require_seed(common: &Common, from_config: Option<u64>) -> Result<u64, CliError> {
    common.seed.or(from_config).ok_or_else(|| {
        CliError::Config("no seed given; pass --seed N (runs never draw entropy)".into())
    })
}

fn write_artifact(out: &Path, name: &str, body: &[u8]) -> Result<(), CliError> {
    std::fs::write(out.join(name), body)
        .map_err(|e| CliError::Data(format!("cannot write {name}: {e}")))
}

fn write_pretty<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value).expect("artifact serializes");
    body.push('\n');
    write_artifact(out, name, body.as_bytes())
}

/// A freeze policy given on the command line: one of the preset names,
/// or a path to a policy JSON document.
fn resolve_policy(name_or_path: &str) -> Result<FreezePolicy, CliError> {
    if let Some(policy) = preset_policy(name_or_path) {
        return Ok(policy);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        return read_json(path);
    }
    Err(CliError::Config(format!(
        "unknown freeze policy `{name_or_path}` (case1, case2, case3, or a policy JSON file)"
    )))
}

/// Class names for a labeled stream: an explicit JSON file wins, then
/// names from the settings document, then `class0..classN` derived from
/// the labels actually present.
fn resolve_class_names(
    file: Option<&Path>,
    from_settings: Option<Vec<String>>,
    labels: &[usize],
) -> Result<Vec<String>, CliError> {
    let names: Vec<String> = if let Some(path) = file {
        read_json(path)?
    } else if let Some(names) = from_settings {
        names
    } else {
        let max = labels.iter().copied().max().unwrap_or(0);
        (0..=max).map(|i| format!("class{i}")).collect()
    };
    if let Some(&bad) = labels.iter().find(|&&l| l >= names.len()) {
        return Err(CliError::Data(format!(
            "stream label {bad} out of range for {} named classes",
            names.len()
        )));
    }
    Ok(names)
}

// ---------------------------------------------------------------- datagen

pub fn datagen(
    common: &Common,
    preset: Preset,
    windows_per_class: usize,
    window_len: usize,
) -> Result<(), CliError> {
    let out = require_out(common)?;
    let mut spec: GeneratorSpec = match &common.config {
        Some(path) => read_json(path)?,
        None => match preset {
            Preset::Source => default_source_spec(),
            Preset::Target => default_target_spec(),
        },
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }

    let mut manifest = RunManifest::new();
    manifest.seeds.insert("spec".into(), spec.seed);
    if let Some(path) = &common.config {
        manifest
            .input_hashes
            .insert("config".into(), hash_input(path, true)?);
    }
    manifest.claim_dir(out)?;

    let segments = segments_for_windows(spec.classes.len(), windows_per_class, window_len, spec.seed);
    let stream: LabeledStream<Value> = generate(&spec, &segments).map_err(classify)?;
    log::info!(
        "generated {} frames over {} classes",
        stream.len(),
        spec.classes.len()
    );

    save_stream(&stream, &out.join("stream.tlds")).map_err(classify)?;
    write_pretty(out, "spec.json", &spec)?;
    write_pretty(out, "classes.json", &spec.class_names())?;
    manifest.artifacts =
        vec!["stream.tlds".into(), "spec.json".into(), "classes.json".into()];
    manifest.write(out)?;

    println!(
        "datagen: {} frames, {} classes, seed {} -> {}",
        stream.len(),
        spec.classes.len(),
        spec.seed,
        out.join("stream.tlds").display()
    );
    Ok(())
}

// ------------------------------------------------------------------ train

fn d_batch() -> usize {
    16
}
fn d_frac() -> f64 {
    0.8
}
fn d_window() -> usize {
    8
}
fn d_train_epochs() -> usize {
    14
}
fn d_train_lr() -> f64 {
    0.08
}

/// Cloud pre-training settings; every field has a default, so an empty
/// config document is valid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default = "d_train_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_train_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_frac")]
    pub train_fraction: f64,
    #[serde(default = "d_window")]
    pub window_len: usize,
    #[serde(default)]
    pub class_names: Option<Vec<String>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults parse")
    }
}

pub fn train(
    common: &Common,
    data: &Path,
    epochs_override: Option<usize>,
    classes: Option<&Path>,
) -> Result<(), CliError> {
    let out = require_out(common)?;
    let settings: TrainSettings = match &common.config {
        Some(path) => read_json(path)?,
        None => TrainSettings::default(),
    };
    let epochs = epochs_override.unwrap_or(settings.epochs);
    let seed = require_seed(common, settings.seed)?;

    let mut manifest = RunManifest::new();
    manifest.seeds.insert("run".into(), seed);
    manifest
        .input_hashes
        .insert("data".into(), hash_input(data, false)?);
    if let Some(path) = &common.config {
        manifest
            .input_hashes
            .insert("config".into(), hash_input(path, true)?);
    }
    if let Some(path) = classes {
        manifest
            .input_hashes
            .insert("classes".into(), hash_input(path, true)?);
    }
    manifest.claim_dir(out)?;

    let stream: LabeledStream<Value> = load_stream(data).map_err(classify)?;
    let names = resolve_class_names(classes, settings.class_names.clone(), &stream.labels)?;
    let shape = stream.frames.shape();
    let arch = ArchConfig::new(shape[1], shape[2], shape[3], names.len());
    let init: PipelineModel = arch.build(sub_seed(seed, "init")).map_err(classify)?;
    log::info!("training {} classes on {} frames", names.len(), stream.len());

    let (model, history) = if epochs == 0 {
        (init, Vec::new())
    } else {
        let (tr, ho) = split(
            &stream,
            settings.train_fraction,
            settings.window_len,
            sub_seed(seed, "split"),
        )
        .map_err(classify)?;
        let train_ds = Dataset::new(tr.frames, tr.labels).map_err(classify)?;
        let holdout_ds = Dataset::new(ho.frames, ho.labels).map_err(classify)?;
        let cfg = FineTuneConfig {
            epochs,
            batch_size: settings.batch_size,
            learning_rate: settings.learning_rate,
            seed: sub_seed(seed, "train"),
            target_classes: names.clone(),
        };
        fine_tune(&init, &FreezePolicy::none(), &train_ds, &holdout_ds, &cfg).map_err(classify)?
    };

    let ckpt = ModelCheckpoint::from_model(
        &model,
        names,
        Provenance {
            trained_on: stream.spec_fingerprint.clone(),
            epochs,
            seed,
        },
    )
    .map_err(classify)?;
    ckpt.save(&out.join("model.tlec")).map_err(classify)?;
    write_pretty(out, "history.json", &history)?;
    manifest.artifacts = vec!["model.tlec".into(), "history.json".into()];
    manifest.write(out)?;

    match history.last() {
        Some(last) => println!(
            "train: {} epochs, holdout loss {:.4}, accuracy {:.3} -> {}",
            epochs,
            last.mean_loss,
            last.accuracy,
            out.join("model.tlec").display()
        ),
        None => println!(
            "train: 0 epochs, checkpoint is the seeded initialization -> {}",
            out.join("model.tlec").display()
        ),
    }
    Ok(())
}

// --------------------------------------------------------------- finetune

fn d_ft_epochs() -> usize {
    6
}
fn d_ft_lr() -> f64 {
    0.05
}
fn d_policy() -> String {
    "case3".into()
}

/// Edge fine-tuning settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneSettings {
    #[serde(default = "d_ft_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_ft_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_frac")]
    pub train_fraction: f64,
    #[serde(default = "d_window")]
    pub window_len: usize,
    #[serde(default = "d_policy")]
    pub policy: String,
    #[serde(default)]
    pub class_names: Option<Vec<String>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for FinetuneSettings {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults parse")
    }
}

#[allow(clippy::too_many_arguments)]
pub fn finetune(
    common: &Common,
    model_path: &Path,
    data: &Path,
    policy_flag: Option<String>,
    epochs_override: Option<usize>,
    classes: Option<&Path>,
) -> Result<(), CliError> {
    let out = require_out(common)?;
    let settings: FinetuneSettings = match &common.config {
        Some(path) => read_json(path)?,
        None => FinetuneSettings::default(),
    };
    let epochs = epochs_override.unwrap_or(settings.epochs);
    let seed = require_seed(common, settings.seed)?;
    let policy_name = policy_flag.unwrap_or_else(|| settings.policy.clone());
    let policy = resolve_policy(&policy_name)?;

    let mut manifest = RunManifest::new();
    manifest.seeds.insert("run".into(), seed);
    if Path::new(&policy_name).exists() {
        manifest
            .input_hashes
            .insert("policy".into(), hash_input(Path::new(&policy_name), true)?);
    }
    manifest
        .input_hashes
        .insert("model".into(), hash_input(model_path, false)?);
    manifest
        .input_hashes
        .insert("data".into(), hash_input(data, false)?);
    if let Some(path) = &common.config {
        manifest
            .input_hashes
            .insert("config".into(), hash_input(path, true)?);
    }
    if let Some(path) = classes {
        manifest
            .input_hashes
            .insert("classes".into(), hash_input(path, true)?);
    }
    manifest.claim_dir(out)?;

    let ckpt = ModelCheckpoint::load(model_path).map_err(classify)?;
    let stream: LabeledStream<Value> = load_stream(data).map_err(classify)?;
    let names = resolve_class_names(classes, settings.class_names.clone(), &stream.labels)?;
    let realigned: PipelineModel =
        realign_head(&ckpt, &names, sub_seed(seed, "head")).map_err(classify)?;
    let budget = apply_freeze(&realigned, &policy).map_err(classify)?;
    log::info!(
        "fine-tuning under {policy_name}: {} of {} parameters trainable",
        budget.trainable,
        budget.total
    );

    let (tr, ho) = split(
        &stream,
        settings.train_fraction,
        settings.window_len,
        sub_seed(seed, "split"),
    )
    .map_err(classify)?;
    let train_ds = Dataset::new(tr.frames, tr.labels).map_err(classify)?;
    let holdout_ds = Dataset::new(ho.frames, ho.labels).map_err(classify)?;
    let cfg = FineTuneConfig {
        epochs,
        batch_size: settings.batch_size,
        learning_rate: settings.learning_rate,
        seed: sub_seed(seed, "finetune"),
        target_classes: names.clone(),
    };
    let (tuned, history) =
        fine_tune(&realigned, &policy, &train_ds, &holdout_ds, &cfg).map_err(classify)?;

    let ckpt_out = ModelCheckpoint::from_model(
        &tuned,
        names,
        Provenance {
            trained_on: stream.spec_fingerprint.clone(),
            epochs,
            seed,
        },
    )
    .map_err(classify)?;
    ckpt_out.save(&out.join("model.tlec")).map_err(classify)?;
    write_pretty(out, "history.json", &history)?;
    write_pretty(out, "budget.json", &budget)?;
    manifest.artifacts = vec![
        "model.tlec".into(),
        "history.json".into(),
        "budget.json".into(),
    ];
    manifest.write(out)?;

    let acc = history.last().map(|s: &TrainStats| s.accuracy).unwrap_or(0.0);
    println!(
        "finetune: {policy_name}, {}/{} trainable params, {} epochs, holdout accuracy {:.3} -> {}",
        budget.trainable,
        budget.total,
        epochs,
        acc,
        out.join("model.tlec").display()
    );
    Ok(())
}

// ----------------------------------------------------------------- budget

#[derive(Debug, Serialize)]
struct BudgetRow {
    policy: String,
    total: usize,
    trainable: usize,
    frozen: usize,
    trainable_fraction: f64,
    published_total: u64,
    published_trainable: u64,
}

pub fn budget(
    common: &Common,
    policy: Option<String>,
    model_path: Option<&Path>,
    classes: usize,
) -> Result<(), CliError> {
    let model: PipelineModel = match model_path {
        Some(path) => ModelCheckpoint::load(path)
            .map_err(classify)?
            .instantiate()
            .map_err(classify)?,
        // Weights are irrelevant to parameter counts; any seed would do.
        None => ArchConfig::new(3, 16, 16, classes).build(0).map_err(classify)?,
    };

    let wanted: Vec<&str> = match &policy {
        Some(name) => {
            if !PUBLISHED_BUDGETS.iter().any(|(n, _, _)| n == name) {
                return Err(CliError::Config(format!(
                    "unknown freeze policy `{name}` (known: case1, case2, case3)"
                )));
            }
            vec![name.as_str()]
        }
        None => PUBLISHED_BUDGETS.iter().map(|(n, _, _)| *n).collect(),
    };

    let mut rows = Vec::new();
    for name in wanted {
        let preset = preset_policy(name).expect("known policy names");
        let b: ParameterBudget = apply_freeze(&model, &preset).map_err(classify)?;
        let (_, pub_total, pub_trainable) = PUBLISHED_BUDGETS
            .iter()
            .find(|(n, _, _)| *n == name)
            .expect("known policy names");
        rows.push(BudgetRow {
            policy: name.to_string(),
            total: b.total,
            trainable: b.trainable,
            frozen: b.frozen,
            trainable_fraction: b.trainable_fraction,
            published_total: *pub_total,
            published_trainable: *pub_trainable,
        });
    }

    println!(
        "{:<7} {:>9} {:>10} {:>9} {:>9} {:>16} {:>20}",
        "policy", "total", "trainable", "frozen", "fraction", "published-total", "published-trainable"
    );
    for r in &rows {
        println!(
            "{:<7} {:>9} {:>10} {:>9} {:>9.4} {:>16} {:>20}",
            r.policy,
            r.total,
            r.trainable,
            r.frozen,
            r.trainable_fraction,
            r.published_total,
            r.published_trainable
        );
    }

    if let Some(out) = common.out.as_deref() {
        let mut manifest = RunManifest::new();
        if let Some(path) = model_path {
            manifest
                .input_hashes
                .insert("model".into(), hash_input(path, false)?);
        }
        manifest.claim_dir(out)?;
        write_pretty(out, "budget.json", &rows)?;
        manifest.artifacts = vec!["budget.json".into()];
        manifest.write(out)?;
    }
    Ok(())
}

// --------------------------------------------------------------- simulate

pub fn simulate(
    common: &Common,
    scenario_file: Option<&Path>,
    baseline: bool,
) -> Result<(), CliError> {
    let out = require_out(common)?;
    let seed = require_seed(common, None)?;
    let scenario_path = scenario_file.or(common.config.as_deref());
    let scenario: Scenario = match scenario_path {
        Some(path) => read_json(path)?,
        None => default_scenario(),
    };
    let mode = if baseline {
        SimMode::RawStreaming
    } else {
        SimMode::Private
    };

    let mut manifest = RunManifest::new();
    manifest.seeds.insert("run".into(), seed);
    if let Some(path) = scenario_path {
        manifest
            .input_hashes
            .insert("config".into(), hash_input(path, true)?);
    }
    manifest.claim_dir(out)?;

    log::info!("running {} simulation, seed {seed}", mode.label());
    let result = run_simulation::<Value>(&scenario, seed, mode).map_err(classify)?;

    write_artifact(out, "events.jsonl", result.log_lines().as_bytes())?;
    write_pretty(out, "ledger.json", &result.ledger)?;
    write_pretty(out, "report.json", &result.report)?;
    write_pretty(out, "actions.json", &result.caregiver_actions)?;
    let training = serde_json::json!({
        "pretrain": result.pretrain_history,
        "finetune": result.finetune_history,
    });
    write_pretty(out, "training.json", &training)?;
    let summary = serde_json::json!({
        "mode": mode.label(),
        "final_tick": result.final_tick,
        "delivered_messages": result.log.len(),
        "total_bytes": result.ledger.total_bytes,
        "boundary_bytes": result.ledger.boundary_bytes,
        "mean_ap": result.report.as_ref().map(|r| r.mean_ap),
        "frame_accuracy": result.report.as_ref().map(|r| r.frame_accuracy),
        "caregiver_actions": result.caregiver_actions.len(),
        "cloud_events": result.cloud_event_log.len(),
    });
    write_pretty(out, "summary.json", &summary)?;
    manifest.artifacts = vec![
        "events.jsonl".into(),
        "ledger.json".into(),
        "report.json".into(),
        "actions.json".into(),
        "training.json".into(),
        "summary.json".into(),
    ];
    manifest.write(out)?;

    println!(
        "simulate: {} ticks ({}), {} messages, boundary {} bytes, mean AP {} -> {}",
        result.final_tick,
        mode.label(),
        result.log.len(),
        result.ledger.boundary_bytes,
        result
            .report
            .as_ref()
            .map(|r| format!("{:.3}", r.mean_ap))
            .unwrap_or_else(|| "n/a".into()),
        out.display()
    );
    Ok(())
}

// --------------------------------------------------------------- evaluate

pub fn evaluate_cmd(
    common: &Common,
    model_path: &Path,
    data: &Path,
    window_len: usize,
    stride: usize,
) -> Result<(), CliError> {
    let out = require_out(common)?;
    let cfg = WindowConfig::new(window_len, stride).map_err(classify)?;

    let mut manifest = RunManifest::new();
    manifest
        .input_hashes
        .insert("model".into(), hash_input(model_path, false)?);
    manifest
        .input_hashes
        .insert("data".into(), hash_input(data, false)?);
    manifest.claim_dir(out)?;

    let ckpt = ModelCheckpoint::load(model_path).map_err(classify)?;
    let model: PipelineModel = ckpt.instantiate().map_err(classify)?;
    let stream: LabeledStream<Value> = load_stream(data).map_err(classify)?;
    let frames = infer_frames(&model, &stream.frames, &cfg).map_err(classify)?;
    let report = evaluate(&frames, &stream.labels, &ckpt.label_space).map_err(classify)?;

    let stream_id = data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "stream".into());
    let events = events_from_frames(
        &frames,
        &stream_id,
        &ckpt.label_space,
        &CategoryMap::default(),
        0,
    )
    .map_err(classify)?;
    let mut lines = String::new();
    for e in &events {
        lines.push_str(&e.to_json_line());
        lines.push('\n');
    }

    write_pretty(out, "report.json", &report)?;
    write_artifact(out, "events.jsonl", lines.as_bytes())?;
    manifest.artifacts = vec!["report.json".into(), "events.jsonl".into()];
    manifest.write(out)?;

    println!(
        "evaluate: {} frames, mean AP {:.4}, frame accuracy {:.4}, {} events -> {}",
        report.num_frames,
        report.mean_ap,
        report.frame_accuracy,
        events.len(),
        out.display()
    );
    Ok(())
}
