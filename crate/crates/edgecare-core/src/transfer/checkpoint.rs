//! Model checkpoint files: the artifact pushed from the cloud trainer to
//! edge devices.
//!
//! Wire format, all integers little-endian:
//!
//! ```text
//! "TLEC" | version: u32 | metadata length: u32 | metadata JSON (UTF-8)
//! then, for each parameter tensor in architecture order:
//!   element count: u64 | elements: f64 ...
//! ```
//!
//! The metadata JSON carries the architecture (including batchnorm epsilon
//! and momentum), the input shape, the label space, and provenance. Tensors
//! follow in each layer's canonical order: weight then bias for conv and
//! dense layers; gamma, beta, running mean, running variance for batchnorm.
//! Weights are stored at full 64-bit precision so a save/load round trip is
//! bitwise lossless.

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CheckpointError, Result};
use crate::nn::{FeatureShape, Layer, LayerParams, LayerSpec, Model};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TLEC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Where a checkpoint came from: enough to regenerate it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub trained_on: String,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    input_shape: FeatureShape,
    architecture: Vec<LayerSpec>,
    label_space: Vec<String>,
    provenance: Provenance,
}

/// A serialized model: layer graph, weights, and the class names the head
/// was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub input_shape: FeatureShape,
    pub architecture: Vec<LayerSpec>,
    pub label_space: Vec<String>,
    pub provenance: Provenance,
    weights: BTreeMap<String, Vec<Tensor<f64>>>,
}

impl ModelCheckpoint {
    /// Captures a model's full state. Fails if `label_space` does not match
    /// the class head width.
    pub fn from_model<F: Scalar>(
        model: &Model<F>,
        label_space: Vec<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        if label_space.len() != model.num_classes() {
            return Err(CheckpointError::BlobShapeMismatch {
                name: "label_space".into(),
                expected: model.num_classes(),
                got: label_space.len(),
            }
            .into());
        }
        let weights = model
            .layers()
            .iter()
            .filter(|l| !l.spec.kind.param_shapes().is_empty())
            .map(|l| {
                let blobs = l
                    .params
                    .all()
                    .into_iter()
                    .map(|t| t.map_to_f64())
                    .collect();
                (l.spec.name.clone(), blobs)
            })
            .collect();
        Ok(ModelCheckpoint {
            format_version: CHECKPOINT_VERSION,
            input_shape: model.input_shape(),
            architecture: model.specs(),
            label_space,
            provenance,
            weights,
        })
    }

    /// Weight blobs for one layer, in canonical order.
    pub fn weights(&self, layer: &str) -> Option<&[Tensor<f64>]> {
        self.weights.get(layer).map(|v| v.as_slice())
    }

    /// Rebuilds a runnable model, narrowing weights to `F`.
    pub fn instantiate<F: Scalar>(&self) -> Result<Model<F>> {
        let layers = self
            .architecture
            .iter()
            .map(|spec| {
                let blobs = self.weights.get(&spec.name).map(|v| v.as_slice()).unwrap_or(&[]);
                let params = params_from_blobs(spec, blobs)?;
                Ok(Layer {
                    spec: spec.clone(),
                    params,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Model::from_layers(self.input_shape, layers)
    }

    /// Writes the checkpoint. The write is atomic: bytes go to a temporary
    /// file in the same directory, which is renamed over `path` only after
    /// a successful flush.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => std::path::PathBuf::from("."),
        };
        let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(CheckpointError::Io)?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            self.write_to(&mut w)?;
            w.flush().map_err(CheckpointError::Io)?;
        }
        tmp.persist(path)
            .map_err(|e| CheckpointError::Io(e.error))?;
        Ok(())
    }

    /// The exact bytes `save` would write.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let meta = Metadata {
            input_shape: self.input_shape,
            architecture: self.architecture.clone(),
            label_space: self.label_space.clone(),
            provenance: self.provenance.clone(),
        };
        let meta_bytes = serde_json::to_vec(&meta).map_err(CheckpointError::Metadata)?;
        w.write_all(&CHECKPOINT_MAGIC).map_err(CheckpointError::Io)?;
        w.write_all(&self.format_version.to_le_bytes())
            .map_err(CheckpointError::Io)?;
        w.write_all(&(meta_bytes.len() as u32).to_le_bytes())
            .map_err(CheckpointError::Io)?;
        w.write_all(&meta_bytes).map_err(CheckpointError::Io)?;
        for spec in &self.architecture {
            let Some(blobs) = self.weights.get(&spec.name) else {
                continue;
            };
            for tensor in blobs {
                w.write_all(&(tensor.data().len() as u64).to_le_bytes())
                    .map_err(CheckpointError::Io)?;
                for v in tensor.data() {
                    w.write_all(&v.to_le_bytes()).map_err(CheckpointError::Io)?;
                }
            }
        }
        Ok(())
    }

    /// Reads and validates a checkpoint file.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(CheckpointError::Io)?;
        Self::parse(&bytes)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic.into());
        }
        let version = u32::from_le_bytes(cur.take(4, "format version")?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::VersionMismatch {
                found: version,
                supported: CHECKPOINT_VERSION,
            }
            .into());
        }
        let meta_len = u32::from_le_bytes(cur.take(4, "metadata length")?.try_into().unwrap());
        let meta_bytes = cur.take(meta_len as usize, "metadata")?;
        let meta: Metadata =
            serde_json::from_slice(meta_bytes).map_err(CheckpointError::Metadata)?;

        let mut weights = BTreeMap::new();
        for spec in &meta.architecture {
            let shapes = spec.kind.param_shapes();
            if shapes.is_empty() {
                continue;
            }
            let mut blobs = Vec::with_capacity(shapes.len());
            for shape in shapes {
                let expected: usize = shape.iter().product();
                let count = u64::from_le_bytes(
                    cur.take(8, &format!("element count for `{}`", spec.name))?
                        .try_into()
                        .unwrap(),
                ) as usize;
                if count != expected {
                    return Err(CheckpointError::BlobShapeMismatch {
                        name: spec.name.clone(),
                        expected,
                        got: count,
                    }
                    .into());
                }
                let raw = cur.take(8 * count, &format!("weights for `{}`", spec.name))?;
                let data = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                blobs.push(Tensor::from_vec(&shape, data).expect("count checked above"));
            }
            weights.insert(spec.name.clone(), blobs);
        }
        if cur.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes.into());
        }

        let ckpt = ModelCheckpoint {
            format_version: version,
            input_shape: meta.input_shape,
            architecture: meta.architecture,
            label_space: meta.label_space,
            provenance: meta.provenance,
            weights,
        };
        // Structural invariants: shape chain, dense head, label-space width.
        let model = ckpt.instantiate::<f64>()?;
        if ckpt.label_space.len() != model.num_classes() {
            return Err(CheckpointError::BlobShapeMismatch {
                name: "label_space".into(),
                expected: model.num_classes(),
                got: ckpt.label_space.len(),
            }
            .into());
        }
        Ok(ckpt)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, reading: &str) -> std::result::Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated {
                reading: reading.to_string(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

fn params_from_blobs<F: Scalar>(spec: &LayerSpec, blobs: &[Tensor<f64>]) -> Result<LayerParams<F>> {
    let shapes = spec.kind.param_shapes();
    if blobs.len() != shapes.len() {
        return Err(CheckpointError::BlobShapeMismatch {
            name: spec.name.clone(),
            expected: shapes.iter().map(|s| s.iter().product::<usize>()).sum(),
            got: blobs.iter().map(|t| t.data().len()).sum(),
        }
        .into());
    }
    for (blob, shape) in blobs.iter().zip(&shapes) {
        if blob.shape() != shape.as_slice() {
            return Err(CheckpointError::BlobShapeMismatch {
                name: spec.name.clone(),
                expected: shape.iter().product(),
                got: blob.data().len(),
            }
            .into());
        }
    }
    let narrowed: Vec<Tensor<F>> = blobs.iter().map(|t| t.map_from_f64()).collect();
    let mut it = narrowed.into_iter();
    let params = match spec.kind.param_shapes().len() {
        0 => LayerParams::Empty,
        2 => {
            let weight = it.next().unwrap();
            let bias = it.next().unwrap();
            match spec.kind.label() {
                "conv2d" => LayerParams::Conv { weight, bias },
                _ => LayerParams::Dense { weight, bias },
            }
        }
        _ => LayerParams::BatchNorm {
            gamma: it.next().unwrap(),
            beta: it.next().unwrap(),
            running_mean: it.next().unwrap(),
            running_var: it.next().unwrap(),
        },
    };
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerKind;
    use crate::rng::seeded;
    use rand::Rng;

    fn small_model(seed: u64) -> Model<f64> {
        let specs = vec![
            LayerSpec {
                name: "conv1".into(),
                block_id: 1,
                kind: LayerKind::Conv2d {
                    in_channels: 1,
                    out_channels: 2,
                    kernel_h: 3,
                    kernel_w: 3,
                    stride: 1,
                    padding: 1,
                },
            },
            LayerSpec {
                name: "bn1".into(),
                block_id: 1,
                kind: LayerKind::BatchNorm {
                    num_features: 2,
                    epsilon: 1e-5,
                    momentum: 0.1,
                },
            },
            LayerSpec {
                name: "gap".into(),
                block_id: 2,
                kind: LayerKind::GlobalAvgPool,
            },
            LayerSpec {
                name: "head".into(),
                block_id: 2,
                kind: LayerKind::Dense {
                    in_features: 2,
                    out_features: 3,
                },
            },
        ];
        Model::new(
            FeatureShape::Spatial {
                channels: 1,
                height: 4,
                width: 4,
            },
            specs,
            seed,
        )
        .unwrap()
    }

    fn provenance() -> Provenance {
        Provenance {
            trained_on: "test-set".into(),
            epochs: 3,
            seed: 42,
        }
    }

    fn labels() -> Vec<String> {
        vec!["a".into(), "b".into(), "c".into()]
    }

    #[test]
    fn round_trip_is_bitwise_lossless() {
        let model = small_model(5);
        let ckpt = ModelCheckpoint::from_model(&model, labels(), provenance()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tlec");
        ckpt.save(&path).unwrap();
        let loaded = ModelCheckpoint::load(&path).unwrap();
        assert_eq!(ckpt, loaded);
        let rebuilt: Model<f64> = loaded.instantiate().unwrap();
        assert_eq!(model, rebuilt);
    }

    #[test]
    fn save_is_deterministic() {
        let model = small_model(5);
        let ckpt = ModelCheckpoint::from_model(&model, labels(), provenance()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.tlec"), dir.path().join("b.tlec"));
        ckpt.save(&p1).unwrap();
        ckpt.save(&p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let model = small_model(5);
        let ckpt = ModelCheckpoint::from_model(&model, labels(), provenance()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tlec");
        ckpt.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        let err = ModelCheckpoint::parse(&bytes).unwrap_err();
        assert!(matches!(
            err,
            crate::Error::Checkpoint(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let model = small_model(5);
        let ckpt = ModelCheckpoint::from_model(&model, labels(), provenance()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tlec");
        ckpt.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
        let err = ModelCheckpoint::parse(&bytes).unwrap_err();
        assert!(matches!(
            err,
            crate::Error::Checkpoint(CheckpointError::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let model = small_model(5);
        let ckpt = ModelCheckpoint::from_model(&model, labels(), provenance()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tlec");
        ckpt.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let err = ModelCheckpoint::parse(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(matches!(
            err,
            crate::Error::Checkpoint(CheckpointError::Truncated { .. })
        ));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let model = small_model(5);
        let ckpt = ModelCheckpoint::from_model(&model, labels(), provenance()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tlec");
        ckpt.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        let err = ModelCheckpoint::parse(&bytes).unwrap_err();
        assert!(matches!(
            err,
            crate::Error::Checkpoint(CheckpointError::TrailingBytes)
        ));
    }

    #[test]
    fn blob_count_mismatch_is_rejected() {
        let model = small_model(5);
        let ckpt = ModelCheckpoint::from_model(&model, labels(), provenance()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tlec");
        ckpt.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // First blob's element count lives right after the metadata.
        let meta_len =
            u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count_at = 12 + meta_len;
        bytes[count_at..count_at + 8].copy_from_slice(&7u64.to_le_bytes());
        let err = ModelCheckpoint::parse(&bytes).unwrap_err();
        assert!(matches!(
            err,
            crate::Error::Checkpoint(CheckpointError::BlobShapeMismatch { .. })
        ));
    }

    #[test]
    fn wrong_label_space_width_is_rejected() {
        let model = small_model(5);
        let err =
            ModelCheckpoint::from_model(&model, vec!["only".into()], provenance()).unwrap_err();
        assert!(matches!(err, crate::Error::Checkpoint(_)));
    }

    #[test]
    fn f32_instantiation_round_trips_through_f64() {
        let model = small_model(5);
        let ckpt = ModelCheckpoint::from_model(&model, labels(), provenance()).unwrap();
        let narrow: Model<f32> = ckpt.instantiate().unwrap();
        let wide: Model<f64> = ckpt.instantiate().unwrap();
        assert_eq!(narrow.num_classes(), wide.num_classes());
    }

    #[test]
    fn mutated_rng_state_does_not_leak_between_saves() {
        // Saving must not consult any ambient randomness: interleave RNG use.
        let model = small_model(5);
        let ckpt = ModelCheckpoint::from_model(&model, labels(), provenance()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.tlec");
        let p2 = dir.path().join("b.tlec");
        ckpt.save(&p1).unwrap();
        let _noise: f64 = seeded(1).random_range(0.0..1.0);
        ckpt.save(&p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }
}
