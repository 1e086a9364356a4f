use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::data::LabeledImages;
use crate::error::{Error, Result};
use crate::nn::{softmax_rows, Adam, Cache, Layer};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 2e-3,
            seed: 0,
        }
    }
}

/// Supervised cross-entropy training with Adam on a private copy of `model`.
///
/// When `test` is given, the held-out accuracy of the result is recorded as
/// its baseline accuracy.
pub fn train_model<T: Scalar>(
    model: &Classifier<T>,
    train: &LabeledImages<T>,
    test: Option<&LabeledImages<T>>,
    opts: &TrainOptions,
) -> Result<Classifier<T>> {
    if train.is_empty() {
        return Err(Error::Precondition("training set is empty".into()));
    }
    model.input_shape().expect(train.shape())?;
    let classes = model.num_classes();
    for &label in train.labels().iter().chain(test.map(|t| t.labels()).unwrap_or(&[])) {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, num_classes: classes });
        }
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }

    let mut trained = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut opt = Adam::new(T::c(opts.learning_rate));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let body = trained.layers.len() - 1;
    debug_assert!(matches!(trained.layers[body], Layer::Softmax));

    for _epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(opts.batch_size) {
            let x = train.gather(batch);
            let mut caches: Vec<Cache<T>> = Vec::with_capacity(body);
            let mut act = x;
            for layer in &trained.layers[..body] {
                let (out, cache) = layer.forward_train(act);
                caches.push(cache);
                act = out;
            }
            // softmax + cross-entropy: dL/dlogits = (p - onehot) / B
            let mut grad = softmax_rows(&act);
            let scale = T::c(1.0 / batch.len() as f64);
            for (mut row, &i) in grad.rows_mut().into_iter().zip(batch) {
                let y = train.labels()[i];
                row[y] -= T::one();
                row.mapv_inplace(|g| g * scale);
            }
            let mut grads: Vec<Vec<Vec<T>>> = vec![Vec::new(); body];
            let mut dy: Array2<T> = grad;
            for (li, layer) in trained.layers[..body].iter().enumerate().rev() {
                let (dx, g) = layer.backward(&caches[li], dy);
                grads[li] = g;
                dy = dx;
            }
            let flat_grads: Vec<Vec<T>> = grads.into_iter().flatten().collect();
            let params: Vec<&mut [T]> = trained.layers.iter_mut().flat_map(|l| l.params_mut()).collect();
            opt.step(params, &flat_grads);
        }
    }

    if let Some(test) = test {
        trained.spec.baseline_accuracy = Some(trained.evaluate(test)?);
    }
    Ok(trained)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_dataset;
    use crate::model::build_model;

    #[test]
    fn zero_epochs_is_a_no_op() {
        let m = build_model::<f32>("tinynet", 1).unwrap();
        let data = synthetic_dataset::<f32>(16, 3);
        let opts = TrainOptions { epochs: 0, ..Default::default() };
        let t = train_model(&m, &data, None, &opts).unwrap();
        assert_eq!(t.layers(), m.layers());
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let m = build_model::<f32>("tinynet", 1).unwrap();
        let data = synthetic_dataset::<f32>(4, 3);
        let bad = LabeledImages::new(data.shape().clone(), data.images().clone(), vec![0, 1, 10, 2]).unwrap();
        assert!(matches!(
            train_model(&m, &bad, None, &TrainOptions::default()),
            Err(Error::LabelOutOfRange { label: 10, num_classes: 10 })
        ));
    }

    #[test]
    fn rejects_empty_dataset() {
        let m = build_model::<f32>("tinynet", 1).unwrap();
        let data = synthetic_dataset::<f32>(4, 3).subset(0..0);
        assert!(train_model(&m, &data, None, &TrainOptions::default()).is_err());
    }

    #[test]
    fn a_few_steps_reduce_training_loss() {
        let m = build_model::<f32>("tinynet", 1).unwrap();
        let data = synthetic_dataset::<f32>(64, 11);
        let loss = |c: &Classifier<f32>| {
            let p = c.predict_batch(data.images().view()).unwrap();
            data.labels()
                .iter()
                .enumerate()
                .map(|(i, &y)| -(p[[i, y]].max(1e-12)).ln() as f64)
                .sum::<f64>()
                / data.len() as f64
        };
        let opts = TrainOptions { epochs: 5, batch_size: 16, ..Default::default() };
        let t = train_model(&m, &data, None, &opts).unwrap();
        assert!(loss(&t) < loss(&m));
    }
}
