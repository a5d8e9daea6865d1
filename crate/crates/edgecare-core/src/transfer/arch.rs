//! The versioned reference architecture and its named freeze presets.
//!
//! Version 1: five blocks with channel widths [16, 32, 64, 128, 256].
//! Blocks 1–4 are conv3×3 → batchnorm → relu, each followed by a 2×2
//! maxpool; block 5 holds two batchnorm → relu → conv3×3 units; a global
//! average pool and a dense head close the network. Frames must be at
//! least 16×16 so the four pools keep a nonzero spatial extent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{FeatureShape, LayerKind, LayerSpec, Model};
use crate::scalar::Scalar;
use crate::transfer::FreezePolicy;

pub const REFERENCE_ARCH_VERSION: u32 = 1;

const WIDTHS: [usize; 5] = [16, 32, 64, 128, 256];
const BN_EPSILON: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// Serializable description of a reference-architecture instance. The
/// `version` field pins the block structure; only version 1 exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub in_channels: usize,
    pub frame_height: usize,
    pub frame_width: usize,
    pub num_classes: usize,
}

fn default_version() -> u32 {
    REFERENCE_ARCH_VERSION
}

impl ArchConfig {
    pub fn new(in_channels: usize, frame_height: usize, frame_width: usize, num_classes: usize) -> Self {
        ArchConfig {
            version: REFERENCE_ARCH_VERSION,
            in_channels,
            frame_height,
            frame_width,
            num_classes,
        }
    }

    pub fn input_shape(&self) -> FeatureShape {
        FeatureShape::Spatial {
            channels: self.in_channels,
            height: self.frame_height,
            width: self.frame_width,
        }
    }

    /// Layer list for this instance, in execution order.
    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>> {
        if self.version != REFERENCE_ARCH_VERSION {
            return Err(Error::InvalidScenario(format!(
                "unknown architecture version {}; this build supports {}",
                self.version, REFERENCE_ARCH_VERSION
            )));
        }
        let conv3 = |name: &str, block: usize, cin: usize, cout: usize| LayerSpec {
            name: name.into(),
            block_id: block,
            kind: LayerKind::Conv2d {
                in_channels: cin,
                out_channels: cout,
                kernel_h: 3,
                kernel_w: 3,
                stride: 1,
                padding: 1,
            },
        };
        let bn = |name: &str, block: usize, features: usize| LayerSpec {
            name: name.into(),
            block_id: block,
            kind: LayerKind::BatchNorm {
                num_features: features,
                epsilon: BN_EPSILON,
                momentum: BN_MOMENTUM,
            },
        };
        let relu = |name: &str, block: usize| LayerSpec {
            name: name.into(),
            block_id: block,
            kind: LayerKind::Relu,
        };

        let mut specs = Vec::new();
        let mut cin = self.in_channels;
        for (i, &width) in WIDTHS.iter().take(4).enumerate() {
            let b = i + 1;
            specs.push(conv3(&format!("conv{b}"), b, cin, width));
            specs.push(bn(&format!("bn{b}"), b, width));
            specs.push(relu(&format!("relu{b}"), b));
            specs.push(LayerSpec {
                name: format!("pool{b}"),
                block_id: b,
                kind: LayerKind::MaxPool2d { kernel: 2, stride: 2 },
            });
            cin = width;
        }
        // Block 5: two batchnorm → relu → conv units.
        specs.push(bn("bn5a", 5, WIDTHS[3]));
        specs.push(relu("relu5a", 5));
        specs.push(conv3("conv5a", 5, WIDTHS[3], WIDTHS[4]));
        specs.push(bn("bn5b", 5, WIDTHS[4]));
        specs.push(relu("relu5b", 5));
        specs.push(conv3("conv5b", 5, WIDTHS[4], WIDTHS[4]));
        specs.push(LayerSpec {
            name: "gap".into(),
            block_id: 6,
            kind: LayerKind::GlobalAvgPool,
        });
        specs.push(LayerSpec {
            name: "head".into(),
            block_id: 6,
            kind: LayerKind::Dense {
                in_features: WIDTHS[4],
                out_features: self.num_classes,
            },
        });
        Ok(specs)
    }

    /// Builds and initializes a model of this architecture.
    pub fn build<F: Scalar>(&self, seed: u64) -> Result<Model<F>> {
        Model::new(self.input_shape(), self.layer_specs()?, seed)
    }
}

/// Named freeze presets over the reference architecture:
/// `case1` trains everything, `case2` freezes blocks 1–4, `case3` also
/// freezes block 5's first batchnorm → relu → conv unit. Unknown names
/// return `None`; arbitrary policies arrive as JSON instead.
pub fn preset_policy(name: &str) -> Option<FreezePolicy> {
    match name {
        "case1" => Some(FreezePolicy::none()),
        "case2" => Some(FreezePolicy::freeze_blocks([1, 2, 3, 4])),
        "case3" => {
            let mut names: Vec<String> = Vec::new();
            for b in 1..=4 {
                for prefix in ["conv", "bn", "relu", "pool"] {
                    names.push(format!("{prefix}{b}"));
                }
            }
            names.extend(["bn5a".into(), "relu5a".into(), "conv5a".into()]);
            Some(FreezePolicy::freeze_layers(names))
        }
        _ => None,
    }
}
