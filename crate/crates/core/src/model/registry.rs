use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Classifier, LayerKind, LayerSpec, ModelSpec};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Dense, DepthwiseConv2d, Layer, MaxPool2d};
use crate::scalar::Scalar;
use crate::tensor::Shape;

const ARCHITECTURES: &[&str] = &["tinynet", "mobilenet-tiny"];

pub fn registered_architectures() -> &'static [&'static str] {
    ARCHITECTURES
}

/// Incrementally appends layers while tracking the running output shape.
struct Builder<T> {
    rng: ChaCha8Rng,
    shape: Shape,
    layers: Vec<Layer<T>>,
    specs: Vec<LayerSpec>,
}

impl<T: Scalar> Builder<T> {
    fn push(&mut self, name: String, kind: LayerKind, layer: Layer<T>) {
        self.shape = layer.output_shape(&self.shape);
        self.specs.push(LayerSpec {
            index: self.specs.len() + 1,
            name,
            kind,
            output_shape: self.shape.clone(),
        });
        self.layers.push(layer);
    }

    fn hwc(&self) -> (usize, usize, usize) {
        self.shape.as_hwc().expect("spatial shape")
    }

    fn conv(&mut self, name: &str, out: usize, kernel: usize) {
        let (h, w, c) = self.hwc();
        let conv = Conv2d::new(&mut self.rng, (h, w), c, out, kernel);
        self.push(name.into(), LayerKind::Conv, Layer::Conv(conv));
    }

    fn depthwise(&mut self, name: &str) {
        let (h, w, c) = self.hwc();
        let conv = DepthwiseConv2d::new(&mut self.rng, (h, w), c, 3);
        self.push(name.into(), LayerKind::DepthwiseConv, Layer::DepthwiseConv(conv));
    }

    fn relu(&mut self, name: &str) {
        self.push(name.into(), LayerKind::Relu, Layer::Relu);
    }

    fn pool(&mut self, name: &str) {
        let (h, w, c) = self.hwc();
        assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even spatial dims");
        self.push(name.into(), LayerKind::Pool, Layer::MaxPool(MaxPool2d { in_hw: (h, w), channels: c }));
    }

    fn classifier_head(&mut self, classes: usize) {
        self.push("flatten".into(), LayerKind::Flatten, Layer::Flatten);
        let dense = Dense::new(&mut self.rng, self.shape.numel(), classes);
        self.push("fc".into(), LayerKind::Dense, Layer::Dense(dense));
        self.push("softmax".into(), LayerKind::Softmax, Layer::Softmax);
    }
}

/// Instantiates a registered architecture with seeded weights.
///
/// `tinynet` is conv-relu-pool x3 (8, 16, 32 channels), flatten, dense,
/// softmax: 12 layers for 32x32x3 inputs and 10 classes. `mobilenet-tiny`
/// replaces the last two convolutions with depthwise-separable blocks.
pub fn build_model<T: Scalar>(name: &str, seed: u64) -> Result<Classifier<T>> {
    let input_shape = Shape::hwc(32, 32, 3);
    let num_classes = 10;
    let mut b = Builder::<T> {
        rng: ChaCha8Rng::seed_from_u64(seed),
        shape: input_shape.clone(),
        layers: Vec::new(),
        specs: Vec::new(),
    };
    match name {
        "tinynet" => {
            for (i, ch) in [8, 16, 32].into_iter().enumerate() {
                b.conv(&format!("conv{}", i + 1), ch, 3);
                b.relu(&format!("relu{}", i + 1));
                b.pool(&format!("pool{}", i + 1));
            }
        }
        "mobilenet-tiny" => {
            b.conv("conv1", 8, 3);
            b.relu("relu1");
            b.pool("pool1");
            for (i, ch) in [16, 32].into_iter().enumerate() {
                let blk = i + 2;
                b.depthwise(&format!("dw{blk}"));
                b.relu(&format!("dw{blk}_relu"));
                b.conv(&format!("pw{blk}"), ch, 1);
                b.relu(&format!("pw{blk}_relu"));
                b.pool(&format!("pool{blk}"));
            }
        }
        other => return Err(Error::Config(format!("unknown architecture {other:?}"))),
    }
    b.classifier_head(num_classes);
    let spec = ModelSpec {
        model_id: format!("{name}-s{seed}"),
        architecture: name.to_string(),
        seed,
        layers: b.specs,
        num_classes,
        input_shape,
        baseline_accuracy: None,
    };
    Ok(Classifier::from_parts(spec, b.layers))
}
