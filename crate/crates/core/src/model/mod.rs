//! Desk-scale classifier zoo, head/tail partitioning and split inference.

mod checkpoint;
mod registry;
mod train;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use registry::{build_model, registered_architectures};
pub use train::{train_model, TrainOptions};

use crate::error::{Error, Result};
use crate::nn::Layer;
use crate::scalar::Scalar;
use crate::tensor::{first_non_finite, ActivationTensor, Shape, Tensor};

/// Inference is run in chunks of this many samples.
const INFER_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    Pool,
    Relu,
    Flatten,
    Dense,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// 1-based position in the model.
    pub index: usize,
    pub name: String,
    pub kind: LayerKind,
    pub output_shape: Shape,
}

/// Architecture description and provenance of a classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    pub architecture: String,
    pub seed: u64,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
    pub input_shape: Shape,
    /// Held-out accuracy; `None` until the model has been evaluated.
    pub baseline_accuracy: Option<f64>,
}

impl ModelSpec {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Cut indices whose layer emits a spatial `(H, W, C)` feature map.
    pub fn legal_cuts(&self) -> Vec<usize> {
        let last = self.layers.len();
        self.layers
            .iter()
            .filter(|l| l.index < last && l.output_shape.is_spatial())
            .map(|l| l.index)
            .collect()
    }

    pub fn layer(&self, index: usize) -> Option<&LayerSpec> {
        index.checked_sub(1).and_then(|i| self.layers.get(i))
    }
}

/// Softmax output for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult<T> {
    pub predicted_class: usize,
    pub confidence: T,
    pub full_distribution: Vec<T>,
}

impl<T: Scalar> ClassificationResult<T> {
    /// Builds a result from a probability vector; ties go to the lowest class.
    pub fn from_distribution(full_distribution: Vec<T>) -> Self {
        let (predicted_class, confidence) = full_distribution
            .iter()
            .copied()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (i, p)| if p > best.1 { (i, p) } else { best });
        Self {
            predicted_class,
            confidence,
            full_distribution,
        }
    }

    pub fn from_rows(probs: &Array2<T>) -> Vec<Self> {
        probs
            .rows()
            .into_iter()
            .map(|r| Self::from_distribution(r.to_vec()))
            .collect()
    }
}

/// A classifier: its spec plus parameters. Immutable once trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<T> {
    spec: ModelSpec,
    layers: Vec<Layer<T>>,
}

fn run_layers<T: Scalar>(layers: &[Layer<T>], x: ArrayView2<T>) -> Array2<T> {
    let mut out = x.to_owned();
    for layer in layers {
        out = layer.forward(out.view());
    }
    out
}

/// Runs `layers` over `x` in fixed-size chunks and stacks the outputs.
fn run_chunked<T: Scalar>(layers: &[Layer<T>], x: ArrayView2<T>) -> Array2<T> {
    let n = x.nrows();
    let mut parts = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + INFER_CHUNK).min(n);
        parts.push(run_layers(layers, x.slice(ndarray::s![start..end, ..])));
        start = end;
    }
    if parts.is_empty() {
        let cols = layers_output_cols(layers).unwrap_or(0);
        return Array2::zeros((0, cols));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(ndarray::Axis(0), &views).expect("uniform chunk widths")
}

fn layers_output_cols<T: Scalar>(layers: &[Layer<T>]) -> Option<usize> {
    layers.iter().rev().find_map(|l| match l {
        Layer::Dense(d) => Some(d.outputs()),
        _ => None,
    })
}

fn check_batch<T: Scalar>(x: &ArrayView2<T>, shape: &Shape) -> Result<()> {
    if x.ncols() != shape.numel() {
        return Err(Error::Shape {
            expected: shape.0.clone(),
            actual: vec![x.nrows(), x.ncols()],
        });
    }
    if let Some(s) = x.as_slice() {
        if let Some(index) = first_non_finite(s) {
            return Err(Error::NonFinite { index });
        }
    } else if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: 0 });
    }
    Ok(())
}

fn row_view<T>(values: &[T]) -> ArrayView2<'_, T> {
    ArrayView2::from_shape((1, values.len()), values).expect("single row view")
}

impl<T: Scalar> Classifier<T> {
    pub(crate) fn from_parts(spec: ModelSpec, layers: Vec<Layer<T>>) -> Self {
        debug_assert_eq!(spec.layers.len(), layers.len());
        Self { spec, layers }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_shape(&self) -> &Shape {
        &self.spec.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn baseline_accuracy(&self) -> Option<f64> {
        self.spec.baseline_accuracy
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn forward_full(&self, x: &Tensor<T>) -> Result<ClassificationResult<T>> {
        self.spec.input_shape.expect(x.shape())?;
        let probs = self.predict_batch(row_view(x.values()))?;
        Ok(ClassificationResult::from_distribution(probs.row(0).to_vec()))
    }

    /// Class probabilities for a batch of flattened inputs, one per row.
    pub fn predict_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        check_batch(&x, &self.spec.input_shape)?;
        Ok(run_chunked(&self.layers, x))
    }

    /// Fraction of `data` classified correctly.
    pub fn evaluate(&self, data: &crate::data::LabeledImages<T>) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Precondition("evaluation set is empty".into()));
        }
        let probs = self.predict_batch(data.images().view())?;
        let correct = ClassificationResult::from_rows(&probs)
            .iter()
            .zip(data.labels())
            .filter(|(r, l)| r.predicted_class == **l)
            .count();
        Ok(correct as f64 / data.len() as f64)
    }

    pub fn partition(&self, cut_index: usize) -> Result<ModelPartition<T>> {
        let legal = self.spec.legal_cuts();
        let (min, max) = (
            legal.first().copied().unwrap_or(1),
            legal.last().copied().unwrap_or(0),
        );
        if !legal.contains(&cut_index) {
            return Err(Error::Partition { cut: cut_index, min, max });
        }
        let cut_shape = self.spec.layers[cut_index - 1].output_shape.clone();
        Ok(ModelPartition {
            model_id: self.spec.model_id.clone(),
            cut_index,
            head: Head {
                specs: self.spec.layers[..cut_index].to_vec(),
                layers: self.layers[..cut_index].to_vec(),
                input_shape: self.spec.input_shape.clone(),
                output_shape: cut_shape.clone(),
            },
            tail: Tail {
                specs: self.spec.layers[cut_index..].to_vec(),
                layers: self.layers[cut_index..].to_vec(),
                input_shape: cut_shape,
                num_classes: self.spec.num_classes,
            },
        })
    }

    /// Output of layer `layer_index` for a batch of inputs. Trusted-side
    /// helper used by the feasibility studies.
    pub fn activations_at(&self, layer_index: usize, x: ArrayView2<T>) -> Result<Array2<T>> {
        if layer_index == 0 || layer_index > self.layers.len() {
            return Err(Error::Partition {
                cut: layer_index,
                min: 1,
                max: self.layers.len(),
            });
        }
        check_batch(&x, &self.spec.input_shape)?;
        Ok(run_chunked(&self.layers[..layer_index], x))
    }
}

/// Device-side component: layers `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Head<T> {
    pub specs: Vec<LayerSpec>,
    layers: Vec<Layer<T>>,
    input_shape: Shape,
    output_shape: Shape,
}

/// Server-side component: layers `n+1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tail<T> {
    pub specs: Vec<LayerSpec>,
    layers: Vec<Layer<T>>,
    input_shape: Shape,
    num_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPartition<T> {
    pub model_id: String,
    pub cut_index: usize,
    pub head: Head<T>,
    pub tail: Tail<T>,
}

impl<T: Scalar> ModelPartition<T> {
    pub fn cut_shape(&self) -> &Shape {
        &self.head.output_shape
    }

    pub fn input_shape(&self) -> &Shape {
        &self.head.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.tail.num_classes
    }

    /// Head and tail layer specs concatenated.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.head.specs.iter().chain(&self.tail.specs).cloned().collect()
    }

    pub fn forward_head(&self, x: &Tensor<T>) -> Result<ActivationTensor<T>> {
        self.head.input_shape.expect(x.shape())?;
        let out = self.forward_head_batch(row_view(x.values()))?;
        let values = out.row(0).to_vec();
        Ok(ActivationTensor::new(self.head.output_shape.clone(), values)?.with_source_layer(self.cut_index))
    }

    pub fn forward_head_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        check_batch(&x, &self.head.input_shape)?;
        Ok(run_chunked(&self.head.layers, x))
    }

    pub fn forward_tail(&self, h: &ActivationTensor<T>) -> Result<ClassificationResult<T>> {
        self.tail.input_shape.expect(h.shape())?;
        let probs = self.forward_tail_batch(row_view(h.values()))?;
        Ok(ClassificationResult::from_distribution(probs.row(0).to_vec()))
    }

    pub fn forward_tail_batch(&self, h: ArrayView2<T>) -> Result<Array2<T>> {
        check_batch(&h, &self.tail.input_shape)?;
        Ok(run_chunked(&self.tail.layers, h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, shape: &Shape) -> Tensor<f32> {
        Tensor::new(shape.clone(), (0..shape.numel()).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn tinynet_registry_entry() {
        let m = build_model::<f32>("tinynet", 42).unwrap();
        assert_eq!(m.input_shape(), &Shape::hwc(32, 32, 3));
        assert_eq!(m.num_classes(), 10);
        let last = m.spec().layers.last().unwrap();
        assert_eq!(last.kind, LayerKind::Softmax);
        assert_eq!(last.output_shape, Shape::flat(10));
        assert!(m.baseline_accuracy().is_none());
    }

    #[test]
    fn layer_indices_are_consecutive_and_shapes_chain() {
        for name in registered_architectures() {
            let m = build_model::<f32>(name, 1).unwrap();
            for (i, l) in m.spec().layers.iter().enumerate() {
                assert_eq!(l.index, i + 1);
            }
            let mut shape = m.input_shape().clone();
            for (layer, spec) in m.layers().iter().zip(&m.spec().layers) {
                shape = layer.output_shape(&shape);
                assert_eq!(shape, spec.output_shape, "{name} layer {}", spec.index);
            }
        }
    }

    #[test]
    fn unknown_architecture_is_a_config_error() {
        assert!(matches!(build_model::<f32>("resnet900", 1), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_weights() {
        let a = build_model::<f32>("tinynet", 42).unwrap();
        let b = build_model::<f32>("tinynet", 42).unwrap();
        assert_eq!(a, b);
        let c = build_model::<f32>("tinynet", 43).unwrap();
        assert_ne!(a.layers(), c.layers());
    }

    #[test]
    fn partition_splits_layer_list() {
        let m = build_model::<f32>("tinynet", 42).unwrap();
        let p = m.partition(3).unwrap();
        assert_eq!(p.head.specs.iter().map(|l| l.index).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(p.tail.specs.first().unwrap().index, 4);
        assert_eq!(p.tail.specs.last().unwrap().index, m.spec().num_layers());
        assert_eq!(p.layer_specs(), m.spec().layers);
    }

    #[test]
    fn partition_bounds() {
        let m = build_model::<f32>("tinynet", 42).unwrap();
        let l = m.spec().num_layers();
        assert!(matches!(m.partition(0), Err(Error::Partition { .. })));
        assert!(matches!(m.partition(l), Err(Error::Partition { .. })));
        // flatten/dense outputs are not spatial feature maps
        assert!(matches!(m.partition(l - 1), Err(Error::Partition { .. })));
    }

    #[test]
    fn head_output_shape_and_relu_range() {
        let m = build_model::<f32>("tinynet", 42).unwrap();
        let relu_cut = m
            .spec()
            .layers
            .iter()
            .find(|l| l.kind == LayerKind::Relu && l.output_shape == Shape::hwc(8, 8, 32))
            .unwrap()
            .index;
        let p = m.partition(relu_cut).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = p.forward_head(&random_image(&mut rng, m.input_shape())).unwrap();
        assert_eq!(h.shape(), &Shape::hwc(8, 8, 32));
        assert!(h.values().iter().all(|v| *v >= 0.0));
        assert_eq!(h.source_layer(), Some(relu_cut));
    }

    #[test]
    fn input_shape_mismatch_errors() {
        let m = build_model::<f32>("tinynet", 42).unwrap();
        let x = Tensor::zeros(Shape::hwc(16, 16, 3));
        assert!(matches!(m.forward_full(&x), Err(Error::Shape { .. })));
        let p = m.partition(3).unwrap();
        assert!(matches!(p.forward_head(&x), Err(Error::Shape { .. })));
    }

    #[test]
    fn tail_rejects_nan_and_accepts_zero() {
        let m = build_model::<f32>("tinynet", 42).unwrap();
        let p = m.partition(6).unwrap();
        let shape = p.cut_shape().clone();
        let mut vals = vec![0.0f32; shape.numel()];
        vals[5] = f32::NAN;
        let bad = ActivationTensor::new_unchecked(shape.clone(), vals);
        assert!(matches!(p.forward_tail(&bad), Err(Error::NonFinite { .. })));
        let r = p.forward_tail(&ActivationTensor::zeros(shape)).unwrap();
        let s: f32 = r.full_distribution.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn full_inference_is_deterministic_and_normalized() {
        let m = build_model::<f32>("tinynet", 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_image(&mut rng, m.input_shape());
        let a = m.forward_full(&x).unwrap();
        let b = m.forward_full(&x).unwrap();
        assert_eq!(a, b);
        let s: f32 = a.full_distribution.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert_eq!(a.confidence, a.full_distribution[a.predicted_class]);
        assert!(a.full_distribution.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn split_matches_full_on_every_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for name in registered_architectures() {
            let m = build_model::<f32>(name, 5).unwrap();
            let x = random_image(&mut rng, m.input_shape());
            let full = m.forward_full(&x).unwrap();
            for cut in m.spec().legal_cuts() {
                let p = m.partition(cut).unwrap();
                let split = p.forward_tail(&p.forward_head(&x).unwrap()).unwrap();
                for (a, b) in split.full_distribution.iter().zip(&full.full_distribution) {
                    assert!((a - b).abs() <= 1e-5, "{name} cut {cut}");
                }
            }
        }
    }
}
