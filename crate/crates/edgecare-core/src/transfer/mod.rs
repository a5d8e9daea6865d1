//! Transfer-learning layer: checkpoints (the cloud→edge model push), layer
//! freezing with parameter budgets, class-head realignment, and small-data
//! fine-tuning with held-out model selection.

pub mod arch;
pub mod checkpoint;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Model, TrainStats};
use crate::rng::{seeded, sub_seed};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use checkpoint::{ModelCheckpoint, Provenance, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

/// How a freeze policy names the layers it freezes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeMode {
    /// Everything trainable.
    None,
    /// Freeze every layer whose `block_id` is listed.
    FreezeBlocks,
    /// Freeze exactly the listed layer names.
    FreezeLayers,
}

/// Declares which part of a model stays fixed during fine-tuning. Only the
/// field matching `mode` is consulted; the class head may never be frozen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezePolicy {
    pub mode: FreezeMode,
    #[serde(default)]
    pub frozen_block_ids: BTreeSet<usize>,
    #[serde(default)]
    pub frozen_layer_names: BTreeSet<String>,
}

impl FreezePolicy {
    pub fn none() -> Self {
        FreezePolicy {
            mode: FreezeMode::None,
            frozen_block_ids: BTreeSet::new(),
            frozen_layer_names: BTreeSet::new(),
        }
    }

    pub fn freeze_blocks<I: IntoIterator<Item = usize>>(blocks: I) -> Self {
        FreezePolicy {
            mode: FreezeMode::FreezeBlocks,
            frozen_block_ids: blocks.into_iter().collect(),
            frozen_layer_names: BTreeSet::new(),
        }
    }

    pub fn freeze_layers<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        FreezePolicy {
            mode: FreezeMode::FreezeLayers,
            frozen_block_ids: BTreeSet::new(),
            frozen_layer_names: names.into_iter().map(Into::into).collect(),
        }
    }

    /// Resolves the policy against a concrete model. Errors if it names an
    /// unknown block or layer, or would freeze the class head.
    pub fn plan<F: Scalar>(&self, model: &Model<F>) -> Result<FreezePlan> {
        let frozen: BTreeSet<String> = match self.mode {
            FreezeMode::None => BTreeSet::new(),
            FreezeMode::FreezeBlocks => {
                let known: BTreeSet<usize> =
                    model.layers().iter().map(|l| l.spec.block_id).collect();
                for id in &self.frozen_block_ids {
                    if !known.contains(id) {
                        return Err(Error::UnknownBlock(*id));
                    }
                }
                model
                    .layers()
                    .iter()
                    .filter(|l| self.frozen_block_ids.contains(&l.spec.block_id))
                    .map(|l| l.spec.name.clone())
                    .collect()
            }
            FreezeMode::FreezeLayers => {
                for name in &self.frozen_layer_names {
                    if model.layer_index(name).is_none() {
                        return Err(Error::UnknownLayer(name.clone()));
                    }
                }
                self.frozen_layer_names.clone()
            }
        };
        let head = model.head_name();
        if frozen.contains(head) {
            return Err(Error::FrozenClassHead(head.to_string()));
        }
        let trainable: BTreeSet<String> = model
            .layers()
            .iter()
            .map(|l| l.spec.name.clone())
            .filter(|n| !frozen.contains(n))
            .collect();
        // Gradients need only reach down to the deepest layer that owns a
        // trainable parameter.
        let lowest_trainable = model
            .layers()
            .iter()
            .position(|l| {
                !frozen.contains(l.name()) && l.spec.kind.trainable_param_count() > 0
            })
            .unwrap_or(model.layers().len() - 1);
        Ok(FreezePlan {
            frozen,
            trainable,
            lowest_trainable,
        })
    }
}

/// A policy resolved against a model: concrete layer-name partitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreezePlan {
    pub frozen: BTreeSet<String>,
    pub trainable: BTreeSet<String>,
    /// Index of the deepest layer holding trainable parameters.
    pub lowest_trainable: usize,
}

/// How a freeze policy splits a model's trainable parameter space.
/// Batchnorm running statistics are bookkeeping, not parameters, and are
/// excluded throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParameterBudget {
    pub total: usize,
    pub trainable: usize,
    pub frozen: usize,
    pub trainable_fraction: f64,
}

/// Resolves `policy` on `model` and accounts for the parameter split.
pub fn apply_freeze<F: Scalar>(model: &Model<F>, policy: &FreezePolicy) -> Result<ParameterBudget> {
    let plan = policy.plan(model)?;
    Ok(budget_for_plan(model, &plan))
}

pub fn budget_for_plan<F: Scalar>(model: &Model<F>, plan: &FreezePlan) -> ParameterBudget {
    let mut trainable = 0usize;
    let mut frozen = 0usize;
    for layer in model.layers() {
        let n = layer.spec.kind.trainable_param_count();
        if plan.frozen.contains(layer.name()) {
            frozen += n;
        } else {
            trainable += n;
        }
    }
    let total = trainable + frozen;
    ParameterBudget {
        total,
        trainable,
        frozen,
        trainable_fraction: trainable as f64 / total as f64,
    }
}

/// Swaps a checkpoint's class head for a freshly initialized dense layer of
/// `target_classes.len()` outputs; every other layer keeps its pre-trained
/// weights bit for bit.
pub fn realign_head<F: Scalar>(
    ckpt: &ModelCheckpoint,
    target_classes: &[String],
    seed: u64,
) -> Result<Model<F>> {
    if target_classes.len() < 2 {
        return Err(Error::TooFewClasses(target_classes.len()));
    }
    let pre: Model<F> = ckpt.instantiate()?;
    pre.with_new_head(target_classes.len(), seed)
}

/// A labeled batch set: inputs `[N, C, H, W]` with one label per item.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    pub inputs: Tensor<F>,
    pub labels: Vec<usize>,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(inputs: Tensor<F>, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() || inputs.shape()[0] != labels.len() {
            return Err(Error::EmptyDataset);
        }
        Ok(Dataset { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check_labels(&self, num_classes: usize) -> Result<()> {
        for &l in &self.labels {
            if l >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    num_classes,
                });
            }
        }
        Ok(())
    }

    fn gather(&self, idx: &[usize]) -> (Tensor<F>, Vec<usize>) {
        let rows: Vec<Tensor<F>> = idx
            .iter()
            .map(|&i| self.inputs.slice_axis0(i, i + 1))
            .collect();
        let refs: Vec<&Tensor<F>> = rows.iter().collect();
        let inputs = Tensor::concat_axis0(&refs).expect("rows share trailing dims");
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        (inputs, labels)
    }
}

/// Settings for one fine-tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub target_classes: Vec<String>,
}

/// SGD over `train` under the freeze plan of `policy`, selecting the epoch
/// with minimum held-out loss.
///
/// Each epoch shuffles the training set with a seed derived from
/// `config.seed` and the epoch index, runs mini-batch SGD, then measures
/// mean loss and accuracy on `holdout`. The returned model is the
/// checkpoint after the best epoch (ties to the earliest); `epochs == 0`
/// returns the input model untouched with empty history. Frozen parameters
/// — including batchnorm running statistics of frozen layers — are bitwise
/// unchanged from the input model.
pub fn fine_tune<F: Scalar>(
    model: &Model<F>,
    policy: &FreezePolicy,
    train: &Dataset<F>,
    holdout: &Dataset<F>,
    config: &FineTuneConfig,
) -> Result<(Model<F>, Vec<TrainStats>)> {
    if train.is_empty() || holdout.is_empty() {
        return Err(Error::EmptyDataset);
    }
    train.check_labels(model.num_classes())?;
    holdout.check_labels(model.num_classes())?;
    if config.batch_size == 0 {
        return Err(Error::EmptyDataset);
    }
    let plan = policy.plan(model)?;

    let mut current = model.clone();
    let mut best: Option<(f64, Model<F>)> = None;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        shuffle(&mut order, sub_seed(config.seed, &format!("epoch-{epoch}")));
        for chunk in order.chunks(config.batch_size) {
            let (batch, labels) = train.gather(chunk);
            let (_, trace, updates) = current.forward_train(&batch, &plan.frozen)?;
            let grads = current.backward_above(&trace, &labels, plan.lowest_trainable)?;
            current.apply_stat_updates(&updates);
            current.sgd_step(&grads, F::from_f64_lossy(config.learning_rate), &plan.trainable)?;
        }
        let (loss, accuracy) = current.eval_loss(&holdout.inputs, &holdout.labels)?;
        let mean_loss = loss.to_f64_lossy();
        history.push(TrainStats {
            epoch,
            mean_loss,
            accuracy,
        });
        if best.as_ref().is_none_or(|(b, _)| mean_loss < *b) {
            best = Some((mean_loss, current.clone()));
        }
    }

    let selected = match best {
        Some((_, m)) => m,
        None => model.clone(),
    };
    Ok((selected, history))
}

/// Fisher–Yates shuffle driven by a dedicated seeded generator, so the
/// visit order depends only on (seed, len).
fn shuffle(indices: &mut [usize], seed: u64) {
    use rand::Rng;
    let mut rng = seeded(seed);
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}
