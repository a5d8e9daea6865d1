//! Scenario configuration for the home/cloud/caregiver simulation: node
//! roster, link parameters, dataset recipes, training settings, and
//! caregiver thresholds — one JSON document.

use serde::{Deserialize, Serialize};

use crate::datagen::{default_source_spec, default_target_spec, GeneratorSpec};
use crate::error::{Error, Result};
use crate::sim::{NodeId, Role};
use crate::stream::{CategoryMap, WindowConfig};
use crate::transfer::FreezePolicy;

/// A node in the scenario roster. Zone is derived from role, never stated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDecl {
    pub role: Role,
    pub index: u32,
}

impl NodeDecl {
    pub fn id(&self) -> NodeId {
        NodeId::new(self.role, self.index)
    }
}

/// An undirected link between two declared nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkDecl {
    pub a: NodeDecl,
    pub b: NodeDecl,
    pub latency_ticks: u64,
    pub bandwidth_bytes_per_tick: u64,
}

/// Epoch/batch settings for one training phase (cloud pre-train or edge
/// fine-tune), plus how much data to synthesize for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainPhaseConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Window-length segments generated per class.
    pub windows_per_class: usize,
    /// Fraction of tiles assigned to the training split.
    pub train_fraction: f64,
}

/// Which freeze policy the edge applies: a named preset of the reference
/// architecture, or an inline policy document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FreezeChoice {
    Preset { preset: String },
    Inline(FreezePolicy),
}

impl FreezeChoice {
    pub fn resolve(&self) -> Result<FreezePolicy> {
        match self {
            FreezeChoice::Preset { preset } => crate::transfer::arch::preset_policy(preset)
                .ok_or_else(|| {
                    Error::InvalidScenario(format!(
                        "unknown freeze preset `{preset}` (known: case1, case2, case3)"
                    ))
                }),
            FreezeChoice::Inline(policy) => Ok(policy.clone()),
        }
    }
}

/// Caregiver reaction thresholds: an INFO activity repeating at least
/// `repeat_threshold` times within the last `history_len` events earns a
/// notification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaregiverConfig {
    pub repeat_threshold: usize,
    pub history_len: usize,
}

impl Default for CaregiverConfig {
    fn default() -> Self {
        CaregiverConfig {
            repeat_threshold: 5,
            history_len: 20,
        }
    }
}

/// Shape of the live phase: how much footage each sensor captures and how
/// it is batched onto the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveConfig {
    /// Segments per activity class in each sensor's stream.
    pub segments_per_class: usize,
    /// Frames per segment.
    pub segment_len: usize,
    /// Frames per FRAME_BATCH message; sensors capture one frame per tick,
    /// so this is also the send cadence in ticks.
    pub frames_per_batch: usize,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            segments_per_class: 3,
            segment_len: 96,
            frames_per_batch: 32,
        }
    }
}

/// Tick costs of the two local computations, so the log shows training
/// time without modeling hardware.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeConfig {
    pub cloud_train_ticks: u64,
    pub edge_finetune_ticks: u64,
}

impl Default for ComputeConfig {
    fn default() -> Self {
        ComputeConfig {
            cloud_train_ticks: 500,
            edge_finetune_ticks: 200,
        }
    }
}

/// The full simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub nodes: Vec<NodeDecl>,
    pub links: Vec<LinkDecl>,
    pub source_data: GeneratorSpec,
    pub target_data: GeneratorSpec,
    pub pretrain: TrainPhaseConfig,
    pub finetune: TrainPhaseConfig,
    pub freeze: FreezeChoice,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub categories: CategoryMap,
    #[serde(default)]
    pub caregiver: CaregiverConfig,
    #[serde(default)]
    pub live: LiveConfig,
    #[serde(default)]
    pub compute: ComputeConfig,
}

impl Scenario {
    /// Structural validation, run before any execution: role counts, link
    /// references, required routes, dataset compatibility.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidScenario(msg));

        let mut seen = std::collections::BTreeSet::new();
        for node in &self.nodes {
            if !seen.insert((node.role, node.index)) {
                return fail(format!("duplicate node {}", node.id()));
            }
        }
        let count = |role: Role| self.nodes.iter().filter(|n| n.role == role).count();
        if count(Role::Edge) != 1 || count(Role::Cloud) != 1 || count(Role::Caregiver) != 1 {
            return fail("need exactly one EDGE, one CLOUD, and one CAREGIVER node".into());
        }
        if count(Role::Sensor) == 0 {
            return fail("need at least one SENSOR node".into());
        }

        for link in &self.links {
            for end in [link.a, link.b] {
                if !seen.contains(&(end.role, end.index)) {
                    return fail(format!("link references unknown node {}", end.id()));
                }
            }
            if link.bandwidth_bytes_per_tick == 0 {
                return fail(format!(
                    "link {}–{} has zero bandwidth",
                    link.a.id(),
                    link.b.id()
                ));
            }
        }

        let edge = self.edge();
        let has_link = |a: NodeId, b: NodeId| {
            self.links.iter().any(|l| {
                (l.a.id() == a && l.b.id() == b) || (l.a.id() == b && l.b.id() == a)
            })
        };
        for sensor in self.sensors() {
            if !has_link(sensor, edge) {
                return fail(format!("missing link between {sensor} and {edge}"));
            }
        }
        if !has_link(edge, self.cloud()) {
            return fail("missing link between edge and cloud".into());
        }
        if !has_link(edge, self.caregiver()) {
            return fail("missing link between edge and caregiver".into());
        }

        self.source_data.validate()?;
        self.target_data.validate()?;
        if self.source_data.channels != self.target_data.channels
            || self.source_data.frame_h != self.target_data.frame_h
            || self.source_data.frame_w != self.target_data.frame_w
        {
            return fail("source and target frame geometry must match (one model serves both)".into());
        }
        self.window.validate()?;
        self.freeze.resolve()?;
        for phase in [&self.pretrain, &self.finetune] {
            if phase.batch_size == 0 || phase.windows_per_class == 0 {
                return fail("training phases need positive batch_size and windows_per_class".into());
            }
            if !(phase.train_fraction > 0.0 && phase.train_fraction < 1.0) {
                return fail(format!(
                    "train_fraction must be in (0,1), got {}",
                    phase.train_fraction
                ));
            }
        }
        if self.caregiver.repeat_threshold == 0 || self.caregiver.history_len == 0 {
            return fail("caregiver thresholds must be positive".into());
        }
        if self.live.segments_per_class > 0 {
            if self.live.segment_len < self.window.window_len {
                return fail(format!(
                    "live segment_len {} is shorter than the inference window {}",
                    self.live.segment_len, self.window.window_len
                ));
            }
            if self.live.frames_per_batch == 0 {
                return fail("frames_per_batch must be positive".into());
            }
        }
        Ok(())
    }

    pub fn sensors(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.role == Role::Sensor)
            .map(|n| n.id())
            .collect()
    }

    pub fn edge(&self) -> NodeId {
        self.first(Role::Edge)
    }

    pub fn cloud(&self) -> NodeId {
        self.first(Role::Cloud)
    }

    pub fn caregiver(&self) -> NodeId {
        self.first(Role::Caregiver)
    }

    fn first(&self, role: Role) -> NodeId {
        self.nodes
            .iter()
            .find(|n| n.role == role)
            .map(|n| n.id())
            .expect("validated roster")
    }

    /// Link parameters for a (src, dst) pair, either orientation.
    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<&LinkDecl> {
        self.links.iter().find(|l| {
            (l.a.id() == a && l.b.id() == b) || (l.a.id() == b && l.b.id() == a)
        })
    }
}

/// The default scenario: two sensors, one edge device, cloud, caregiver;
/// fast in-home links, slower uplinks; case-3 freezing; the stock source
/// and target datasets.
pub fn default_scenario() -> Scenario {
    let sensor0 = NodeDecl {
        role: Role::Sensor,
        index: 0,
    };
    let sensor1 = NodeDecl {
        role: Role::Sensor,
        index: 1,
    };
    let edge = NodeDecl {
        role: Role::Edge,
        index: 0,
    };
    let cloud = NodeDecl {
        role: Role::Cloud,
        index: 0,
    };
    let caregiver = NodeDecl {
        role: Role::Caregiver,
        index: 0,
    };
    let link = |a: NodeDecl, b: NodeDecl, latency: u64, bandwidth: u64| LinkDecl {
        a,
        b,
        latency_ticks: latency,
        bandwidth_bytes_per_tick: bandwidth,
    };
    Scenario {
        nodes: vec![sensor0, sensor1, edge, cloud, caregiver],
        links: vec![
            link(sensor0, edge, 1, 4096),
            link(sensor1, edge, 1, 4096),
            link(edge, cloud, 5, 1024),
            link(edge, caregiver, 3, 512),
        ],
        source_data: default_source_spec(),
        target_data: default_target_spec(),
        pretrain: TrainPhaseConfig {
            epochs: 14,
            batch_size: 16,
            learning_rate: 0.08,
            windows_per_class: 24,
            train_fraction: 0.8,
        },
        finetune: TrainPhaseConfig {
            epochs: 6,
            batch_size: 16,
            learning_rate: 0.05,
            windows_per_class: 30,
            train_fraction: 0.8,
        },
        freeze: FreezeChoice::Preset {
            preset: "case3".into(),
        },
        window: WindowConfig::default(),
        categories: CategoryMap::default(),
        caregiver: CaregiverConfig::default(),
        live: LiveConfig::default(),
        compute: ComputeConfig::default(),
    }
}
