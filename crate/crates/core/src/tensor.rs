//! Per-sample tensors. Spatial data is stored row-major in `(H, W, C)` order,
//! which is also the layout of one row in a batched `Array2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Logical per-sample shape: `[H, W, C]` for feature maps, `[D]` for vectors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape(pub Vec<usize>);

impl Shape {
    pub fn hwc(h: usize, w: usize, c: usize) -> Self {
        Shape(vec![h, w, c])
    }

    pub fn flat(d: usize) -> Self {
        Shape(vec![d])
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn is_spatial(&self) -> bool {
        self.0.len() == 3
    }

    /// `(H, W, C)` for a spatial shape.
    pub fn as_hwc(&self) -> Option<(usize, usize, usize)> {
        match self.0.as_slice() {
            &[h, w, c] => Some((h, w, c)),
            _ => None,
        }
    }

    pub(crate) fn expect(&self, actual: &Shape) -> Result<()> {
        if self == actual {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: self.0.clone(),
                actual: actual.0.clone(),
            })
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "({})", parts.join("x"))
    }
}

/// Index of the first non-finite value, if any.
pub fn first_non_finite<T: Scalar>(values: &[T]) -> Option<usize> {
    values.iter().position(|v| !v.is_finite())
}

/// A single input image or generic dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    values: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Shape, values: Vec<T>) -> Result<Self> {
        if shape.numel() != values.len() {
            return Err(Error::Shape {
                expected: shape.0.clone(),
                actual: vec![values.len()],
            });
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.numel();
        Self {
            shape,
            values: vec![T::zero(); n],
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// Intermediate feature map `h` emitted by the device-side head.
///
/// `source_layer` is only known on the trusted side. Frames decoded off the
/// wire, and everything the attacker handles, carry `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor<T> {
    shape: Shape,
    values: Vec<T>,
    source_layer: Option<usize>,
}

impl<T: Scalar> ActivationTensor<T> {
    /// Validates shape/value-count agreement and finiteness.
    pub fn new(shape: Shape, values: Vec<T>) -> Result<Self> {
        if shape.numel() != values.len() {
            return Err(Error::Shape {
                expected: shape.0.clone(),
                actual: vec![values.len()],
            });
        }
        if let Some(index) = first_non_finite(&values) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            shape,
            values,
            source_layer: None,
        })
    }

    /// Skips the finiteness scan. Used where the caller needs to represent a
    /// corrupted tensor, e.g. to exercise downstream validation.
    pub fn new_unchecked(shape: Shape, values: Vec<T>) -> Self {
        assert_eq!(shape.numel(), values.len(), "shape/value count mismatch");
        Self {
            shape,
            values,
            source_layer: None,
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.numel();
        Self {
            shape,
            values: vec![T::zero(); n],
            source_layer: None,
        }
    }

    pub fn with_source_layer(mut self, layer: usize) -> Self {
        self.source_layer = Some(layer);
        self
    }

    /// Drops trusted-side provenance.
    pub fn anonymized(mut self) -> Self {
        self.source_layer = None;
        self
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn source_layer(&self) -> Option<usize> {
        self.source_layer
    }

    pub fn check_finite(&self) -> Result<()> {
        match first_non_finite(&self.values) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    /// Mean over the spatial positions of each channel. Non-spatial tensors
    /// are returned as-is.
    pub fn channel_means(&self) -> Vec<T> {
        match self.shape.as_hwc() {
            Some((h, w, c)) => {
                let mut acc = vec![T::zero(); c];
                for px in self.values.chunks_exact(c) {
                    for (a, v) in acc.iter_mut().zip(px) {
                        *a += *v;
                    }
                }
                let n = T::c((h * w) as f64);
                acc.into_iter().map(|a| a / n).collect()
            }
            None => self.values.clone(),
        }
    }
}
