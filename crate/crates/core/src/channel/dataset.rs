use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ActivationTensor, Shape};

/// The attacker's collection `D_h`: activations only.
///
/// Nothing here identifies the source model, the cut layer, the input image
/// or its label; provenance is always reported unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct EavesdropDataset<T> {
    shape: Option<Shape>,
    samples: Vec<ActivationTensor<T>>,
}

impl<T: Scalar> EavesdropDataset<T> {
    /// Builds a dataset from intercepted frames, all of which must share one
    /// shape. Trusted-side provenance is stripped.
    pub fn from_frames(frames: Vec<ActivationTensor<T>>) -> Result<Self> {
        let shape = frames.first().map(|f| f.shape().clone());
        if let Some(s) = &shape {
            for f in &frames {
                s.expect(f.shape())?;
            }
        }
        Ok(Self {
            shape,
            samples: frames.into_iter().map(|f| f.anonymized()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// An empty collection is valid but cannot train anything.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-sample shape; `None` for an empty dataset.
    pub fn shape(&self) -> Option<&Shape> {
        self.shape.as_ref()
    }

    pub fn samples(&self) -> &[ActivationTensor<T>] {
        &self.samples
    }

    /// Always false: the attacker never learns which model produced `D_h`.
    pub fn model_known(&self) -> bool {
        false
    }

    /// Always false: the cut layer is not observable on the wire.
    pub fn cut_known(&self) -> bool {
        false
    }

    /// The first `n` samples.
    pub fn first(&self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(Error::InsufficientData {
                requested: n,
                available: self.len(),
            });
        }
        Ok(Self {
            shape: if n == 0 { None } else { self.shape.clone() },
            samples: self.samples[..n].to_vec(),
        })
    }

    /// One flattened sample per row.
    pub fn to_matrix(&self) -> Array2<T> {
        let d = self.shape.as_ref().map_or(0, |s| s.numel());
        let mut m = Array2::zeros((self.len(), d));
        for (mut row, s) in m.rows_mut().into_iter().zip(&self.samples) {
            row.as_slice_mut().unwrap().copy_from_slice(s.values());
        }
        m
    }
}
