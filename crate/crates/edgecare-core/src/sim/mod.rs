//! Discrete-event simulation of the home-care deployment: sensors and an
//! edge device inside the home, cloud and caregiver center outside. The
//! pipeline runs in four phases — cloud pre-training, model push, edge
//! fine-tuning, live streaming with on-edge inference — over a typed
//! message protocol in which raw frames are structurally barred from
//! leaving the home zone.

pub mod scenario;

use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::datagen::{generate, segments_for_windows, split, LabeledStream};
use crate::error::{Error, Result};
use crate::nn::{Model, TrainStats};
use crate::rng::sub_seed;
use crate::scalar::Scalar;
use crate::stream::{
    evaluate, events_from_frames, Category, EvaluationReport, FrameScore, InferenceEvent,
};
use crate::tensor::Tensor;
use crate::transfer::checkpoint::{ModelCheckpoint, Provenance};
use crate::transfer::{fine_tune, realign_head, Dataset, FineTuneConfig, FreezePolicy};

pub use scenario::{
    default_scenario, CaregiverConfig, ComputeConfig, FreezeChoice, LinkDecl, LiveConfig,
    NodeDecl, Scenario, TrainPhaseConfig,
};

/// What a node is. Role determines zone: sensors and the edge device live
/// in the home; cloud and caregiver center are outside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Sensor,
    Edge,
    Cloud,
    Caregiver,
}

impl Role {
    pub fn zone(self) -> Zone {
        match self {
            Role::Sensor | Role::Edge => Zone::Home,
            Role::Cloud | Role::Caregiver => Zone::Outside,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Role::Sensor => "SENSOR",
            Role::Edge => "EDGE",
            Role::Cloud => "CLOUD",
            Role::Caregiver => "CAREGIVER",
        }
    }
}

/// Which side of the home boundary a node sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Zone {
    Home,
    Outside,
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Zone::Home => "HOME",
            Zone::Outside => "OUTSIDE",
        })
    }
}

/// A simulated node. `zone` is always `role.zone()`; `new` is the only
/// constructor, so the pairing cannot drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub role: Role,
    pub index: u32,
    pub zone: Zone,
}

impl NodeId {
    pub fn new(role: Role, index: u32) -> Self {
        NodeId {
            role,
            index,
            zone: role.zone(),
        }
    }

    /// Short name without the zone, used as a link-key component.
    pub fn key(&self) -> String {
        format!("{}-{}", self.role.label(), self.index)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}@{}", self.role.label(), self.index, self.zone)
    }
}

/// Protocol message kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    FrameBatch,
    ModelPush,
    ModelRequest,
    InferenceEvent,
    Ack,
}

impl MessageKind {
    pub fn label(self) -> &'static str {
        match self {
            MessageKind::FrameBatch => "FRAME_BATCH",
            MessageKind::ModelPush => "MODEL_PUSH",
            MessageKind::ModelRequest => "MODEL_REQUEST",
            MessageKind::InferenceEvent => "INFERENCE_EVENT",
            MessageKind::Ack => "ACK",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Kind-specific message bodies. Only `FrameBatch` has a tensor-typed
/// field; every other variant is pixel-free by construction, which is the
/// structural half of the privacy guarantee.
#[derive(Debug, Clone)]
pub enum Payload<F> {
    FrameBatch {
        stream_id: String,
        start_frame: usize,
        /// `[n, C, H, W]` raw frames.
        frames: Tensor<F>,
        /// Marks the final batch of a sensor's stream.
        last: bool,
    },
    ModelPush {
        /// Serialized checkpoint bytes, opaque to the transport.
        checkpoint: Vec<u8>,
    },
    ModelRequest {
        target_classes: Vec<String>,
    },
    InferenceEvent {
        event: InferenceEvent,
    },
    Ack {
        of: MessageKind,
        of_seq: u64,
    },
}

impl<F: Scalar> Payload<F> {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::FrameBatch { .. } => MessageKind::FrameBatch,
            Payload::ModelPush { .. } => MessageKind::ModelPush,
            Payload::ModelRequest { .. } => MessageKind::ModelRequest,
            Payload::InferenceEvent { .. } => MessageKind::InferenceEvent,
            Payload::Ack { .. } => MessageKind::Ack,
        }
    }

    /// Wire size: frames at one byte per value (8-bit sensor encoding),
    /// checkpoints at their serialized length, everything else at its JSON
    /// length.
    pub fn size_bytes(&self) -> u64 {
        match self {
            Payload::FrameBatch { frames, .. } => frames.len() as u64,
            Payload::ModelPush { checkpoint } => checkpoint.len() as u64,
            Payload::ModelRequest { target_classes } => {
                serde_json::json!({ "target_classes": target_classes })
                    .to_string()
                    .len() as u64
            }
            Payload::InferenceEvent { event } => event.to_json_line().len() as u64,
            Payload::Ack { of, of_seq } => {
                format!(r#"{{"ack":"{}","seq":{of_seq}}}"#, of.label()).len() as u64
            }
        }
    }
}

/// A message in flight.
#[derive(Debug, Clone)]
pub struct Message<F> {
    pub src: NodeId,
    pub dst: NodeId,
    pub payload: Payload<F>,
    pub size_bytes: u64,
    pub send_tick: u64,
    pub seq: u64,
}

impl<F: Scalar> Message<F> {
    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }
}

/// Outcome of the home-gateway check for one message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundaryDecision {
    Accept,
    Reject { reason: String },
}

/// The home privacy rule: a `FRAME_BATCH` from a HOME node to an OUTSIDE
/// node is rejected; inference events, model traffic, and acknowledgments
/// pass in both directions, and everything inside a single zone passes.
pub fn check_boundary<F: Scalar>(msg: &Message<F>) -> BoundaryDecision {
    if msg.src.zone == Zone::Home
        && msg.dst.zone == Zone::Outside
        && msg.kind() == MessageKind::FrameBatch
    {
        BoundaryDecision::Reject {
            reason: "raw data crossing home boundary".into(),
        }
    } else {
        BoundaryDecision::Accept
    }
}

/// Cumulative traffic accounting over delivered messages, plus a tally of
/// sends the boundary refused.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficLedger {
    /// Directional link key `"SENSOR-0->EDGE-0"` → cumulative bytes.
    pub per_link_bytes: BTreeMap<String, u64>,
    /// Message kind label → delivered count.
    pub per_kind_counts: BTreeMap<String, u64>,
    /// Sum over all delivered messages.
    pub total_bytes: u64,
    /// Bytes of delivered messages with src in HOME and dst OUTSIDE.
    pub boundary_bytes: u64,
    /// Rejection reason → count of refused sends (never delivered).
    pub rejected: BTreeMap<String, u64>,
}

impl TrafficLedger {
    fn record_delivery(&mut self, src: NodeId, dst: NodeId, kind: MessageKind, size: u64) {
        let link = format!("{}->{}", src.key(), dst.key());
        *self.per_link_bytes.entry(link).or_insert(0) += size;
        *self.per_kind_counts.entry(kind.label().to_string()).or_insert(0) += 1;
        self.total_bytes += size;
        if src.zone == Zone::Home && dst.zone == Zone::Outside {
            self.boundary_bytes += size;
        }
    }

    fn record_rejection(&mut self, reason: &str) {
        *self.rejected.entry(reason.to_string()).or_insert(0) += 1;
    }
}

/// One delivered message, as it appears in the JSON-lines event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Delivery tick.
    pub tick: u64,
    pub seq: u64,
    pub kind: MessageKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub size_bytes: u64,
    pub send_tick: u64,
}

impl LogEntry {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log entries serialize")
    }
}

/// Caregiver reaction to one inference event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CaregiverAction {
    None,
    Notify,
    Escalate,
}

/// Caregiver rule: ALERT events escalate, SERVICE_REQUEST events notify,
/// and an INFO event is ignored unless its activity has now appeared at
/// least `repeat_threshold` times within the last `history_len` events —
/// the current one included, `history` being the events seen before it.
pub fn caregiver_policy(
    event: &InferenceEvent,
    history: &[InferenceEvent],
    config: &CaregiverConfig,
) -> CaregiverAction {
    match event.category {
        Category::Alert => CaregiverAction::Escalate,
        Category::ServiceRequest => CaregiverAction::Notify,
        Category::Info => {
            let lookback = config.history_len.saturating_sub(1);
            let start = history.len().saturating_sub(lookback);
            let repeats = 1 + history[start..]
                .iter()
                .filter(|e| e.category == Category::Info && e.activity == event.activity)
                .count();
            if repeats >= config.repeat_threshold {
                CaregiverAction::Notify
            } else {
                CaregiverAction::None
            }
        }
    }
}

/// One caregiver decision, kept in arrival order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub tick: u64,
    pub stream_id: String,
    pub activity: String,
    pub category: Category,
    pub action: CaregiverAction,
}

/// Whether the run honors the privacy boundary or deliberately violates it
/// to measure the cost of raw streaming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SimMode {
    /// The intended design: inference on the edge, only events leave home.
    Private,
    /// Anti-pattern baseline: the edge forwards every raw frame batch to
    /// the cloud, bypassing the boundary check. Exists only to quantify
    /// what the private design saves.
    RawStreaming,
}

impl SimMode {
    pub fn label(self) -> &'static str {
        match self {
            SimMode::Private => "PRIVATE",
            SimMode::RawStreaming => "RAW_STREAMING",
        }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationOutput {
    pub mode: SimMode,
    pub final_tick: u64,
    pub log: Vec<LogEntry>,
    pub ledger: TrafficLedger,
    pub pretrain_history: Vec<TrainStats>,
    pub finetune_history: Vec<TrainStats>,
    /// Recognition quality over all live frames, against ground truth the
    /// simulator kept sensor-side. `None` when no frames were streamed.
    pub report: Option<EvaluationReport>,
    pub caregiver_actions: Vec<ActionRecord>,
    /// The cloud's append-only store of forwarded inference events.
    pub cloud_event_log: Vec<InferenceEvent>,
}

impl SimulationOutput {
    /// The delivered-message log as JSON lines.
    pub fn log_lines(&self) -> String {
        let mut out = String::new();
        for entry in &self.log {
            out.push_str(&entry.to_json_line());
            out.push('\n');
        }
        out
    }
}

/// Queue entry ordered by (delivery tick, sequence number), min-first.
struct Delivery<F> {
    tick: u64,
    seq: u64,
    msg: Message<F>,
}

impl<F> PartialEq for Delivery<F> {
    fn eq(&self, other: &Self) -> bool {
        (self.tick, self.seq) == (other.tick, other.seq)
    }
}
impl<F> Eq for Delivery<F> {}
impl<F> PartialOrd for Delivery<F> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<F> Ord for Delivery<F> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the earliest event.
        (other.tick, other.seq).cmp(&(self.tick, self.seq))
    }
}

struct Engine<'a, F: Scalar> {
    scenario: &'a Scenario,
    mode: SimMode,
    seed: u64,
    queue: BinaryHeap<Delivery<F>>,
    next_seq: u64,
    now: u64,
    final_tick: u64,
    ledger: TrafficLedger,
    log: Vec<LogEntry>,
    // Cloud state.
    pretrain_history: Vec<TrainStats>,
    cloud_event_log: Vec<InferenceEvent>,
    cloud_raw_frames: u64,
    // Edge state.
    edge_model: Option<Model<F>>,
    finetune_history: Vec<TrainStats>,
    edge_buffers: BTreeMap<String, Vec<Tensor<F>>>,
    edge_scores: BTreeMap<String, Vec<FrameScore<F>>>,
    // Sensor state: full labeled streams; only pixels ever leave a sensor.
    sensor_streams: BTreeMap<u32, LabeledStream<F>>,
    // Caregiver state.
    caregiver_history: Vec<InferenceEvent>,
    caregiver_actions: Vec<ActionRecord>,
    target_classes: Vec<String>,
}

impl<'a, F: Scalar> Engine<'a, F> {
    fn new(scenario: &'a Scenario, seed: u64, mode: SimMode) -> Result<Self> {
        let target_classes = scenario.target_data.class_names();
        let mut sensor_streams = BTreeMap::new();
        if scenario.live.segments_per_class > 0 {
            for sensor in scenario.sensors() {
                let mut spec = scenario.target_data.clone();
                spec.seed = sub_seed(spec.seed, &format!("sensor-{}", sensor.index));
                let segments = segments_for_windows(
                    spec.classes.len(),
                    scenario.live.segments_per_class,
                    scenario.live.segment_len,
                    sub_seed(seed, &format!("live-segments-{}", sensor.index)),
                );
                sensor_streams.insert(sensor.index, generate(&spec, &segments)?);
            }
        }
        Ok(Engine {
            scenario,
            mode,
            seed,
            queue: BinaryHeap::new(),
            next_seq: 0,
            now: 0,
            final_tick: 0,
            ledger: TrafficLedger::default(),
            log: Vec::new(),
            pretrain_history: Vec::new(),
            cloud_event_log: Vec::new(),
            cloud_raw_frames: 0,
            edge_model: None,
            finetune_history: Vec::new(),
            edge_buffers: BTreeMap::new(),
            edge_scores: BTreeMap::new(),
            sensor_streams,
            caregiver_history: Vec::new(),
            caregiver_actions: Vec::new(),
            target_classes,
        })
    }

    /// Queues a message for delivery, or drops it if the gateway refuses.
    /// `bypass_boundary` is the baseline's explicit violation switch.
    fn send(
        &mut self,
        src: NodeId,
        dst: NodeId,
        payload: Payload<F>,
        send_tick: u64,
        bypass_boundary: bool,
    ) -> Result<()> {
        let msg = Message {
            src,
            dst,
            size_bytes: payload.size_bytes(),
            payload,
            send_tick,
            seq: self.next_seq,
        };
        if !bypass_boundary {
            if let BoundaryDecision::Reject { reason } = check_boundary(&msg) {
                log::info!("gateway dropped {} {}->{}: {}", msg.kind(), src, dst, reason);
                self.ledger.record_rejection(&reason);
                return Ok(());
            }
        }
        let link = self.scenario.link_between(src, dst).ok_or_else(|| {
            Error::InvalidScenario(format!("no link between {src} and {dst}"))
        })?;
        let tick = send_tick
            + link.latency_ticks
            + msg.size_bytes.div_ceil(link.bandwidth_bytes_per_tick);
        self.next_seq += 1;
        self.queue.push(Delivery {
            tick,
            seq: msg.seq,
            msg,
        });
        Ok(())
    }

    fn deliver(&mut self, d: Delivery<F>) -> Result<()> {
        self.now = d.tick;
        self.final_tick = d.tick;
        let msg = d.msg;
        self.ledger
            .record_delivery(msg.src, msg.dst, msg.kind(), msg.size_bytes);
        self.log.push(LogEntry {
            tick: d.tick,
            seq: msg.seq,
            kind: msg.kind(),
            src: msg.src,
            dst: msg.dst,
            size_bytes: msg.size_bytes,
            send_tick: msg.send_tick,
        });
        match msg.dst.role {
            Role::Cloud => self.cloud_receive(msg),
            Role::Edge => self.edge_receive(msg),
            Role::Sensor => self.sensor_receive(msg),
            Role::Caregiver => self.caregiver_receive(msg),
        }
    }

    // ---- cloud ----

    fn cloud_receive(&mut self, msg: Message<F>) -> Result<()> {
        match msg.payload {
            Payload::ModelRequest { .. } => {
                let bytes = self.pretrain()?;
                let reply_at = self.now + self.scenario.compute.cloud_train_ticks;
                self.send(
                    msg.dst,
                    msg.src,
                    Payload::ModelPush { checkpoint: bytes },
                    reply_at,
                    false,
                )?;
            }
            Payload::InferenceEvent { event } => {
                // Append-only long-term store; no analytics modeled.
                self.cloud_event_log.push(event);
                self.send(
                    msg.dst,
                    msg.src,
                    Payload::Ack {
                        of: MessageKind::InferenceEvent,
                        of_seq: msg.seq,
                    },
                    self.now,
                    false,
                )?;
            }
            Payload::FrameBatch { frames, .. } => {
                // Baseline only: raw footage lands outside the home.
                self.cloud_raw_frames += frames.shape()[0] as u64;
            }
            Payload::ModelPush { .. } | Payload::Ack { .. } => {}
        }
        Ok(())
    }

    /// Phase 1: synthesize the source corpus and train the source model
    /// from scratch, returning serialized checkpoint bytes.
    fn pretrain(&mut self) -> Result<Vec<u8>> {
        let scenario = self.scenario;
        let spec = &scenario.source_data;
        let phase = &scenario.pretrain;
        let window_len = scenario.window.window_len;
        let segments = segments_for_windows(
            spec.classes.len(),
            phase.windows_per_class,
            window_len,
            sub_seed(self.seed, "source-segments"),
        );
        let stream: LabeledStream<F> = generate(spec, &segments)?;
        let (train_part, holdout_part) = split(
            &stream,
            phase.train_fraction,
            window_len,
            sub_seed(self.seed, "source-split"),
        )?;
        let train = Dataset::new(train_part.frames, train_part.labels)?;
        let holdout = Dataset::new(holdout_part.frames, holdout_part.labels)?;

        let arch = crate::transfer::arch::ArchConfig::new(
            spec.channels,
            spec.frame_h,
            spec.frame_w,
            spec.classes.len(),
        );
        let init: Model<F> = arch.build(sub_seed(self.seed, "cloud-init"))?;
        let config = FineTuneConfig {
            epochs: phase.epochs,
            batch_size: phase.batch_size,
            learning_rate: phase.learning_rate,
            seed: sub_seed(self.seed, "cloud-train"),
            target_classes: spec.class_names(),
        };
        let (model, history) = fine_tune(&init, &FreezePolicy::none(), &train, &holdout, &config)?;
        self.pretrain_history = history;

        let ckpt = ModelCheckpoint::from_model(
            &model,
            spec.class_names(),
            Provenance {
                trained_on: stream.spec_fingerprint.clone(),
                epochs: phase.epochs,
                seed: self.seed,
            },
        )?;
        ckpt.to_bytes()
    }

    // ---- edge ----

    fn edge_receive(&mut self, msg: Message<F>) -> Result<()> {
        match msg.payload {
            Payload::ModelPush { checkpoint } => self.edge_adapt(&checkpoint, msg.src, msg.dst),
            Payload::FrameBatch {
                stream_id,
                frames,
                last,
                ..
            } => self.edge_ingest(msg.src, msg.dst, stream_id, frames, last, msg.seq),
            Payload::ModelRequest { .. } | Payload::InferenceEvent { .. } | Payload::Ack { .. } => {
                Ok(())
            }
        }
    }

    /// Phases 2–3: receive the pushed model, swap its head for the target
    /// label space, fine-tune on locally generated ground-labeled footage,
    /// then acknowledge the push and wake the sensors.
    fn edge_adapt(&mut self, checkpoint: &[u8], cloud: NodeId, edge: NodeId) -> Result<()> {
        let scenario = self.scenario;
        let ckpt = ModelCheckpoint::parse(checkpoint)?;
        let realigned: Model<F> =
            realign_head(&ckpt, &self.target_classes, sub_seed(self.seed, "realign"))?;

        let phase = &scenario.finetune;
        let window_len = scenario.window.window_len;
        let mut spec = scenario.target_data.clone();
        spec.seed = sub_seed(spec.seed, "edge-local");
        let segments = segments_for_windows(
            spec.classes.len(),
            phase.windows_per_class,
            window_len,
            sub_seed(self.seed, "edge-segments"),
        );
        let stream: LabeledStream<F> = generate(&spec, &segments)?;
        let (train_part, holdout_part) = split(
            &stream,
            phase.train_fraction,
            window_len,
            sub_seed(self.seed, "edge-split"),
        )?;
        let train = Dataset::new(train_part.frames, train_part.labels)?;
        let holdout = Dataset::new(holdout_part.frames, holdout_part.labels)?;

        let policy = scenario.freeze.resolve()?;
        let config = FineTuneConfig {
            epochs: phase.epochs,
            batch_size: phase.batch_size,
            learning_rate: phase.learning_rate,
            seed: sub_seed(self.seed, "edge-train"),
            target_classes: self.target_classes.clone(),
        };
        let (model, history) = fine_tune(&realigned, &policy, &train, &holdout, &config)?;
        self.edge_model = Some(model);
        self.finetune_history = history;

        let ready = self.now + scenario.compute.edge_finetune_ticks;
        self.send(
            edge,
            cloud,
            Payload::Ack {
                of: MessageKind::ModelPush,
                of_seq: 0,
            },
            ready,
            false,
        )?;
        for sensor in scenario.sensors() {
            self.send(
                edge,
                sensor,
                Payload::Ack {
                    of: MessageKind::ModelPush,
                    of_seq: 0,
                },
                ready,
                false,
            )?;
        }
        Ok(())
    }

    /// Phase 4, edge side: buffer incoming frames; on a stream's final
    /// batch, run windowed inference and emit one event per recognized
    /// activity run to both the caregiver and the cloud.
    fn edge_ingest(
        &mut self,
        sensor: NodeId,
        edge: NodeId,
        stream_id: String,
        frames: Tensor<F>,
        last: bool,
        seq: u64,
    ) -> Result<()> {
        if self.mode == SimMode::RawStreaming {
            // Anti-pattern: relay raw footage outside the home. Only the
            // explicit bypass flag lets this through the gateway.
            self.send(
                edge,
                self.scenario.cloud(),
                Payload::FrameBatch {
                    stream_id: stream_id.clone(),
                    start_frame: 0,
                    frames: frames.clone(),
                    last,
                },
                self.now,
                true,
            )?;
        }
        self.edge_buffers
            .entry(stream_id.clone())
            .or_default()
            .push(frames);
        if !last {
            return Ok(());
        }

        let parts = self.edge_buffers.remove(&stream_id).unwrap_or_default();
        let refs: Vec<&Tensor<F>> = parts.iter().collect();
        let stream = Tensor::concat_axis0(&refs)?;
        let model = self.edge_model.as_ref().ok_or_else(|| {
            Error::InvalidScenario(format!(
                "frames from {sensor} arrived before the edge model was ready (seq {seq})"
            ))
        })?;
        let scores = infer_frames_checked(model, &stream, self.scenario)?;
        let events = events_from_frames(
            &scores,
            &stream_id,
            &self.target_classes,
            &self.scenario.categories,
            self.now,
        )?;
        self.edge_scores.insert(stream_id, scores);
        for event in events {
            self.send(
                edge,
                self.scenario.caregiver(),
                Payload::InferenceEvent {
                    event: event.clone(),
                },
                self.now,
                false,
            )?;
            self.send(
                edge,
                self.scenario.cloud(),
                Payload::InferenceEvent { event },
                self.now,
                false,
            )?;
        }
        Ok(())
    }

    // ---- sensors ----

    /// A sensor wakes on the edge's ready signal and schedules its whole
    /// stream as frame batches, one frame captured per tick.
    fn sensor_receive(&mut self, msg: Message<F>) -> Result<()> {
        if !matches!(msg.payload, Payload::Ack { .. }) {
            return Ok(());
        }
        let sensor = msg.dst;
        let Some(stream) = self.sensor_streams.get(&sensor.index) else {
            return Ok(());
        };
        let frames = stream.frames.clone();
        let total = frames.shape()[0];
        let batch = self.scenario.live.frames_per_batch;
        let stream_id = format!("sensor-{}", sensor.index);
        let mut start = 0;
        let mut k = 0u64;
        while start < total {
            let end = (start + batch).min(total);
            self.send(
                sensor,
                msg.src,
                Payload::FrameBatch {
                    stream_id: stream_id.clone(),
                    start_frame: start,
                    frames: frames.slice_axis0(start, end),
                    last: end == total,
                },
                self.now + k * batch as u64,
                false,
            )?;
            start = end;
            k += 1;
        }
        Ok(())
    }

    // ---- caregiver ----

    fn caregiver_receive(&mut self, msg: Message<F>) -> Result<()> {
        let Payload::InferenceEvent { event } = msg.payload else {
            return Ok(());
        };
        let action = caregiver_policy(&event, &self.caregiver_history, &self.scenario.caregiver);
        self.caregiver_actions.push(ActionRecord {
            tick: self.now,
            stream_id: event.stream_id.clone(),
            activity: event.activity.clone(),
            category: event.category,
            action,
        });
        self.caregiver_history.push(event);
        self.send(
            msg.dst,
            msg.src,
            Payload::Ack {
                of: MessageKind::InferenceEvent,
                of_seq: msg.seq,
            },
            self.now,
            false,
        )
    }
}

fn infer_frames_checked<F: Scalar>(
    model: &Model<F>,
    stream: &Tensor<F>,
    scenario: &Scenario,
) -> Result<Vec<FrameScore<F>>> {
    if model.num_classes() != scenario.target_data.classes.len() {
        return Err(Error::ClassCountMismatch {
            model: model.num_classes(),
            labels: scenario.target_data.classes.len(),
        });
    }
    crate::stream::infer_frames(model, stream, &scenario.window)
}

/// Runs the four-phase pipeline under `scenario` and returns the full
/// delivered-message log, traffic ledger, training histories, recognition
/// report, and caregiver decisions. Identical `(scenario, seed, mode)`
/// inputs produce bitwise-identical serialized outputs.
pub fn run_simulation<F: Scalar>(
    scenario: &Scenario,
    seed: u64,
    mode: SimMode,
) -> Result<SimulationOutput> {
    scenario.validate()?;
    let mut eng: Engine<'_, F> = Engine::new(scenario, seed, mode)?;

    // The opening move: the edge asks the cloud for pre-trained weights.
    eng.send(
        scenario.edge(),
        scenario.cloud(),
        Payload::ModelRequest {
            target_classes: eng.target_classes.clone(),
        },
        0,
        false,
    )?;

    while let Some(d) = eng.queue.pop() {
        eng.deliver(d)?;
    }

    // Score the run against ground truth that never left the sensors.
    let report = if eng.edge_scores.is_empty() {
        None
    } else {
        let mut all_scores = Vec::new();
        let mut all_labels = Vec::new();
        for (stream_id, scores) in &eng.edge_scores {
            let index: u32 = stream_id
                .strip_prefix("sensor-")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidScenario(format!("alien stream id {stream_id}")))?;
            let truth = &eng.sensor_streams[&index];
            all_scores.extend(scores.iter().cloned());
            all_labels.extend(truth.labels.iter().copied());
        }
        Some(evaluate(&all_scores, &all_labels, &eng.target_classes)?)
    };

    Ok(SimulationOutput {
        mode,
        final_tick: eng.final_tick,
        log: eng.log,
        ledger: eng.ledger,
        pretrain_history: eng.pretrain_history,
        finetune_history: eng.finetune_history,
        report,
        caregiver_actions: eng.caregiver_actions,
        cloud_event_log: eng.cloud_event_log,
    })
}
