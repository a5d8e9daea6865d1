//! Core library for an edge-deployed human-monitoring pipeline: a small
//! convolutional network trained in a simulated cloud, fine-tuned on an edge
//! device under layer-freezing policies, applied to sliding windows of
//! sensor frames, and exercised end to end by a discrete-event simulation
//! of a smart-home deployment.
//!
//! All numeric code is generic over the scalar type via [`scalar::Scalar`]
//! (`f32` or `f64`); the shipped pipeline runs in `f64`, and the aliases at
//! the crate root fix that choice.

pub mod datagen;
pub mod error;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod stream;
pub mod tensor;
pub mod transfer;

pub use error::{Error, Result};

/// Scalar type used by the shipped pipeline.
pub type Value = f64;
/// Tensor specialization used by the shipped pipeline.
pub type PipelineTensor = tensor::Tensor<Value>;
/// Model specialization used by the shipped pipeline.
pub type PipelineModel = nn::Model<Value>;
