//! Dense row-major n-dimensional array, the carrier for frames, weights and
//! activations.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); len],
        }
    }

    pub fn filled(shape: &[usize], value: F) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::BadTensorShape {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// Reinterprets the same buffer under a new shape of equal volume.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::BadTensorShape {
                shape: shape.to_vec(),
                len: self.data.len(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// SHA-256 of the little-endian f64 image of the contents, prefixed by
    /// the shape. Bitwise-equal tensors hash equal; used by the freeze
    /// immutability checks.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for d in &self.shape {
            h.update((*d as u64).to_le_bytes());
        }
        for v in &self.data {
            h.update(v.to_f64_lossy().to_le_bytes());
        }
        let digest = h.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    /// Copy widened to `f64` (exact for `f32` and `f64` values).
    pub fn map_to_f64(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }


    /// Slice of one item along the leading axis (e.g. one frame of a
    /// `[T, C, H, W]` stream).
    pub fn index_axis0(&self, i: usize) -> &[F] {
        let stride: usize = self.shape[1..].iter().product();
        &self.data[i * stride..(i + 1) * stride]
    }

    /// New tensor holding items `range` of the leading axis.
    pub fn slice_axis0(&self, start: usize, end: usize) -> Self {
        let stride: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Tensor {
            shape,
            data: self.data[start * stride..end * stride].to_vec(),
        }
    }

    /// Concatenates tensors along the leading axis. All trailing dims must match.
    pub fn concat_axis0(parts: &[&Tensor<F>]) -> Result<Self> {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let tail = &parts[0].shape[1..];
        let mut total = 0usize;
        for p in parts {
            if &p.shape[1..] != tail {
                return Err(Error::BadTensorShape {
                    shape: p.shape.clone(),
                    len: p.data.len(),
                });
            }
            total += p.shape[0];
        }
        let mut shape = parts[0].shape.clone();
        shape[0] = total;
        let mut data = Vec::with_capacity(shape.iter().product());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor { shape, data })
    }
}

impl Tensor<f64> {
    /// Narrows stored values to `F` (inverse of [`Tensor::map_to_f64`]).
    pub fn map_from_f64<F: Scalar>(&self) -> Tensor<F> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| F::from_f64_lossy(*v)).collect(),
        }
    }
}
