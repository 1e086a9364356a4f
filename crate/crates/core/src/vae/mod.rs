//! The attacker's VAE over intercepted activations and the latent-space
//! attack built on it.
//!
//! Encoder: flatten -> [dense -> ReLU] x depth -> {dense(mu), dense(logvar)}.
//! Decoder mirrors it: [dense -> ReLU] x depth -> dense(input) -> sigmoid.
//! Hidden widths start at `hidden_size` and halve with each extra layer.
//! Activations are min-max normalized into `[0, 1]` before encoding and
//! mapped back after decoding.

mod attack;
mod checkpoint;
pub mod latent;

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use attack::{
    frame_seed, generate_adversarial, select_target, top_k_indices, AttackConfig, LatentPool,
};
pub use latent::{
    gaussian_kl, kl_to_prior, lerp, pairwise_distance, slerp, DistanceMode, Interpolation, LatentCode,
};

use crate::channel::EavesdropDataset;
use crate::error::{Error, Result};
use crate::nn::Dense;
use crate::scalar::Scalar;
use crate::tensor::{ActivationTensor, Shape};

/// Minimum number of captures `train_vae` accepts.
pub const MIN_TRAINING_SAMPLES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub input_shape: Shape,
    pub hidden_size: usize,
    /// Number of hidden layers on each side.
    #[serde(default = "default_depth")]
    pub depth: usize,
    pub latent_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight of the KL term.
    pub kl_weight: f64,
    pub batch_size: usize,
    pub seed: u64,
}

fn default_depth() -> usize {
    1
}

impl VaeConfig {
    pub fn new(input_shape: Shape) -> Self {
        Self {
            input_shape,
            hidden_size: 1000,
            depth: 1,
            latent_dim: 32,
            epochs: 20,
            learning_rate: 1e-3,
            kl_weight: 1.0,
            batch_size: 64,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim < 2 {
            return Err(Error::Config(format!("latent_dim {} < 2", self.latent_dim)));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        let narrowest = *self.hidden_widths().last().expect("depth >= 1");
        if narrowest < self.latent_dim {
            return Err(Error::Config(format!(
                "hidden width {narrowest} < latent_dim {}",
                self.latent_dim
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.kl_weight >= 0.0) {
            return Err(Error::Config("learning_rate must be > 0 and kl_weight >= 0".into()));
        }
        if self.input_shape.numel() == 0 {
            return Err(Error::Config("empty input shape".into()));
        }
        Ok(())
    }

    /// Encoder hidden widths, outermost first.
    pub fn hidden_widths(&self) -> Vec<usize> {
        (0..self.depth).map(|i| self.hidden_size >> i).collect()
    }
}

/// Global min-max affine map fitted on `D_h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer<T> {
    pub min: T,
    pub max: T,
}

impl<T: Scalar> Normalizer<T> {
    pub fn fit(dataset: &EavesdropDataset<T>) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Precondition("cannot fit a normalizer on an empty dataset".into()));
        }
        let mut min = T::infinity();
        let mut max = T::neg_infinity();
        for s in dataset.samples() {
            for &v in s.values() {
                min = min.min(v);
                max = max.max(v);
            }
        }
        if !(max > min) {
            return Err(Error::DegenerateRange(min.as_f64()));
        }
        Ok(Self { min, max })
    }

    pub fn normalize(&self, v: T) -> T {
        (v - self.min) / (self.max - self.min)
    }

    pub fn denormalize(&self, v: T) -> T {
        v * (self.max - self.min) + self.min
    }
}

/// Noise used by the reparameterization `z = mu + exp(logvar / 2) * eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    /// `eps = 0`, hence `z = mu`.
    Zero,
    /// `eps ~ N(0, I)` drawn from a generator seeded with `seed`.
    Sample { seed: u64 },
}

/// Mean per-sample losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel<T> {
    config: VaeConfig,
    normalizer: Normalizer<T>,
    encoder: Vec<Dense<T>>,
    enc_mu: Dense<T>,
    enc_logvar: Dense<T>,
    decoder: Vec<Dense<T>>,
    dec_out: Dense<T>,
    loss_trace: Vec<EpochLoss>,
}

fn relu<T: Scalar>(mut x: Array2<T>) -> Array2<T> {
    x.mapv_inplace(|v| v.max(T::zero()));
    x
}

fn relu_backward<T: Scalar>(mut grad: Array2<T>, out: &Array2<T>) -> Array2<T> {
    Zip::from(&mut grad).and(out).for_each(|g, &o| {
        if o <= T::zero() {
            *g = T::zero();
        }
    });
    grad
}

/// Runs a ReLU stack, returning its input followed by every layer output.
fn relu_stack<T: Scalar>(layers: &[Dense<T>], x: Array2<T>) -> Vec<Array2<T>> {
    let mut outs = vec![x];
    for layer in layers {
        let next = relu(layer.forward(outs.last().expect("nonempty").view()));
        outs.push(next);
    }
    outs
}

/// Backpropagates `grad` (w.r.t. the stack output) through a ReLU stack;
/// returns the input gradient and per-layer parameter gradients in order.
fn relu_stack_backward<T: Scalar>(
    layers: &[Dense<T>],
    outs: &[Array2<T>],
    mut grad: Array2<T>,
) -> (Array2<T>, Vec<Vec<Vec<T>>>) {
    let mut grads = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate().rev() {
        let d_pre = relu_backward(grad, &outs[i + 1]);
        let (dx, g) = layer.backward(&outs[i], &d_pre);
        grads.push(g);
        grad = dx;
    }
    grads.reverse();
    (grad, grads)
}

fn sigmoid<T: Scalar>(mut x: Array2<T>) -> Array2<T> {
    x.mapv_inplace(|v| T::one() / (T::one() + (-v).exp()));
    x
}

/// Layer init mirroring the usual `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
fn linear<T: Scalar>(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> Dense<T> {
    Dense::with_bound(rng, inputs, outputs, 1.0 / (inputs as f64).sqrt())
}

impl<T: Scalar> VaeModel<T> {
    /// Untrained model with seeded weights.
    pub fn init(config: VaeConfig, normalizer: Normalizer<T>) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.input_shape.numel();
        let l = config.latent_dim;
        let mut enc_dims = vec![d];
        enc_dims.extend(config.hidden_widths());
        let h = *enc_dims.last().expect("nonempty");
        let encoder = enc_dims.windows(2).map(|w| linear(&mut rng, w[0], w[1])).collect();
        let enc_mu = linear(&mut rng, h, l);
        let enc_logvar = linear(&mut rng, h, l);
        let mut dec_dims: Vec<usize> = enc_dims[1..].iter().rev().copied().collect();
        dec_dims.insert(0, l);
        let decoder = dec_dims.windows(2).map(|w| linear(&mut rng, w[0], w[1])).collect();
        Ok(Self {
            encoder,
            enc_mu,
            enc_logvar,
            decoder,
            dec_out: linear(&mut rng, config.hidden_size, d),
            config,
            normalizer,
            loss_trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &VaeConfig {
        &self.config
    }

    pub fn normalizer(&self) -> &Normalizer<T> {
        &self.normalizer
    }

    pub fn input_shape(&self) -> &Shape {
        &self.config.input_shape
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn loss_trace(&self) -> &[EpochLoss] {
        &self.loss_trace
    }

    /// Encoder stack, mu head, logvar head, decoder stack, output layer.
    fn layers(&self) -> Vec<&Dense<T>> {
        let mut v: Vec<&Dense<T>> = self.encoder.iter().collect();
        v.extend([&self.enc_mu, &self.enc_logvar]);
        v.extend(self.decoder.iter());
        v.push(&self.dec_out);
        v
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense<T>> {
        let mut v: Vec<&mut Dense<T>> = self.encoder.iter_mut().collect();
        v.extend([&mut self.enc_mu, &mut self.enc_logvar]);
        v.extend(self.decoder.iter_mut());
        v.push(&mut self.dec_out);
        v
    }

    fn normalize_batch(&self, x: ArrayView2<T>) -> Array2<T> {
        x.mapv(|v| self.normalizer.normalize(v))
    }

    /// `(mu, logvar)` for a batch of normalized inputs.
    fn encode_normalized(&self, x: ArrayView2<T>) -> (Array2<T>, Array2<T>) {
        let h = self.encoder.iter().fold(x.to_owned(), |a, l| relu(l.forward(a.view())));
        (self.enc_mu.forward(h.view()), self.enc_logvar.forward(h.view()))
    }

    /// Sigmoid-range output for a batch of latent points.
    pub fn decode_normalized_batch(&self, z: ArrayView2<T>) -> Array2<T> {
        let h = self.decoder.iter().fold(z.to_owned(), |a, l| relu(l.forward(a.view())));
        sigmoid(self.dec_out.forward(h.view()))
    }

    /// `(mu, logvar)` for a batch of raw activations, one per row.
    pub fn encode_batch(&self, x: ArrayView2<T>) -> Result<(Array2<T>, Array2<T>)> {
        if x.ncols() != self.config.input_shape.numel() {
            return Err(Error::Shape {
                expected: self.config.input_shape.0.clone(),
                actual: vec![x.nrows(), x.ncols()],
            });
        }
        Ok(self.encode_normalized(self.normalize_batch(x).view()))
    }

    pub fn encode(&self, h: &ActivationTensor<T>, noise: Noise) -> Result<LatentCode<T>> {
        self.config.input_shape.expect(h.shape())?;
        let x = ArrayView2::from_shape((1, h.values().len()), h.values()).expect("row view");
        let (mu, logvar) = self.encode_batch(x)?;
        let mu = mu.row(0).to_vec();
        let logvar = logvar.row(0).to_vec();
        let z = match noise {
            Noise::Zero => mu.clone(),
            Noise::Sample { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                mu.iter()
                    .zip(&logvar)
                    .map(|(&m, &lv)| {
                        let eps: f64 = StandardNormal.sample(&mut rng);
                        m + (T::c(0.5) * lv).exp() * T::c(eps)
                    })
                    .collect()
            }
        };
        Ok(LatentCode { mu, logvar, z })
    }

    fn check_latent(&self, z: &[T]) -> Result<()> {
        if z.len() != self.config.latent_dim {
            return Err(Error::Dimension {
                left: self.config.latent_dim,
                right: z.len(),
            });
        }
        if let Some(index) = crate::tensor::first_non_finite(z) {
            return Err(Error::NonFinite { index });
        }
        Ok(())
    }

    /// Decoder output before denormalization, in `[0, 1]`.
    pub fn decode_normalized(&self, z: &[T]) -> Result<Vec<T>> {
        self.check_latent(z)?;
        let zv = ArrayView2::from_shape((1, z.len()), z).expect("row view");
        Ok(self.decode_normalized_batch(zv).row(0).to_vec())
    }

    /// Generated activation `D(z)` in the original activation range.
    pub fn decode(&self, z: &[T]) -> Result<ActivationTensor<T>> {
        let values = self
            .decode_normalized(z)?
            .into_iter()
            .map(|v| self.normalizer.denormalize(v))
            .collect();
        ActivationTensor::new(self.config.input_shape.clone(), values)
    }

    /// Mean per-sample reconstruction MSE (per element, in activation units)
    /// of `decode(mu)` over `dataset`.
    pub fn reconstruction_mse(&self, dataset: &EavesdropDataset<T>) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::Precondition("empty dataset".into()));
        }
        let x = dataset.to_matrix();
        let (mu, _) = self.encode_batch(x.view())?;
        let recon = self.decode_normalized_batch(mu.view()).mapv(|v| self.normalizer.denormalize(v));
        let se: f64 = Zip::from(&recon).and(&x).fold(0.0, |acc, &r, &o| acc + (r - o).as_f64().powi(2));
        Ok(se / x.len() as f64)
    }

    /// Forward and backward pass for one normalized batch; returns the
    /// summed (not averaged) losses and gradients in `layers_mut` order.
    fn batch_gradients(&self, x: &Array2<T>, eps: &Array2<T>) -> (f64, f64, Vec<Vec<T>>) {
        let b = x.nrows();
        let inv_b = T::c(1.0 / b as f64);
        let beta = T::c(self.config.kl_weight);
        let half = T::c(0.5);

        let enc = relu_stack(&self.encoder, x.clone());
        let h1 = enc.last().expect("nonempty");
        let mu = self.enc_mu.forward(h1.view());
        let logvar = self.enc_logvar.forward(h1.view());
        let std = logvar.mapv(|lv| (half * lv).exp());
        let z = &mu + &(&std * eps);
        let dec = relu_stack(&self.decoder, z);
        let h2 = dec.last().expect("nonempty");
        let xr = sigmoid(self.dec_out.forward(h2.view()));

        let diff = &xr - x;
        let recon: f64 = diff.iter().map(|d| d.as_f64().powi(2)).sum();
        let kl: f64 = Zip::from(&mu)
            .and(&logvar)
            .fold(0.0, |acc, &m, &lv| acc + 0.5 * (m * m + lv.exp() - T::one() - lv).as_f64());

        // reconstruction: sum of squared errors per sample, mean over batch
        let two_inv_b = T::c(2.0) * inv_b;
        let mut d_pre_out = diff;
        Zip::from(&mut d_pre_out).and(&xr).for_each(|g, &y| *g = *g * two_inv_b * y * (T::one() - y));
        let (d_h2, g_out) = self.dec_out.backward(h2, &d_pre_out);
        let (d_z, g_dec) = relu_stack_backward(&self.decoder, &dec, d_h2);

        let kl_scale = beta * inv_b;
        let d_mu = &d_z + &mu.mapv(|m| m * kl_scale);
        let mut d_logvar = &d_z * eps * &std * half;
        Zip::from(&mut d_logvar)
            .and(&logvar)
            .for_each(|g, &lv| *g += kl_scale * half * (lv.exp() - T::one()));

        let (dh1_mu, g_mu) = self.enc_mu.backward(h1, &d_mu);
        let (dh1_lv, g_lv) = self.enc_logvar.backward(h1, &d_logvar);
        let (_, g_enc) = relu_stack_backward(&self.encoder, &enc, dh1_mu + dh1_lv);

        let grads = g_enc
            .into_iter()
            .chain([g_mu, g_lv])
            .chain(g_dec)
            .chain([g_out])
            .flatten()
            .collect();
        (recon, kl, grads)
    }
}

/// Fits a VAE to `D_h` with Adam on squared-error reconstruction plus
/// `kl_weight` times the KL to the standard normal prior.
pub fn train_vae<T: Scalar>(dataset: &EavesdropDataset<T>, config: &VaeConfig) -> Result<VaeModel<T>> {
    config.validate()?;
    if dataset.len() < MIN_TRAINING_SAMPLES {
        return Err(Error::Precondition(format!(
            "VAE training needs at least {MIN_TRAINING_SAMPLES} samples, got {}",
            dataset.len()
        )));
    }
    config.input_shape.expect(dataset.shape().expect("non-empty"))?;
    let normalizer = Normalizer::fit(dataset)?;
    let mut vae = VaeModel::init(config.clone(), normalizer)?;
    let x_all = vae.normalize_batch(dataset.to_matrix().view());
    let n = x_all.nrows();
    let l = config.latent_dim;
    // separate streams so the data order does not depend on the noise draws
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0001);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0002);
    let mut opt = crate::nn::Adam::new(T::c(config.learning_rate));
    let mut order: Vec<usize> = (0..n).collect();

    for _epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let (mut recon_sum, mut kl_sum) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            let x = x_all.select(Axis(0), batch);
            let eps = Array2::from_shape_simple_fn((batch.len(), l), || {
                let e: f64 = StandardNormal.sample(&mut noise_rng);
                T::c(e)
            });
            let (recon, kl, grads) = vae.batch_gradients(&x, &eps);
            recon_sum += recon;
            kl_sum += kl;
            let params: Vec<&mut [T]> = vae.layers_mut().into_iter().flat_map(|d| d.params_mut()).collect();
            opt.step(params, &grads);
        }
        let recon = recon_sum / n as f64;
        let kl = kl_sum / n as f64;
        vae.loss_trace.push(EpochLoss {
            total: recon + config.kl_weight * kl,
            reconstruction: recon,
            kl,
        });
    }
    Ok(vae)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Low-rank synthetic "activations": nonnegative mixtures of 3 patterns.
    pub(crate) fn toy_dataset(n: usize, seed: u64) -> EavesdropDataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape::hwc(2, 2, 3);
        let patterns: Vec<Vec<f64>> = (0..3).map(|_| (0..12).map(|_| rng.random_range(0.0..2.0)).collect()).collect();
        let frames = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
                let v = (0..12).map(|i| (0..3).map(|k| w[k] * patterns[k][i]).sum::<f64>()).collect();
                ActivationTensor::new(shape.clone(), v).unwrap()
            })
            .collect();
        EavesdropDataset::from_frames(frames).unwrap()
    }

    pub(crate) fn toy_config() -> VaeConfig {
        VaeConfig {
            hidden_size: 32,
            latent_dim: 4,
            epochs: 60,
            learning_rate: 3e-3,
            batch_size: 16,
            seed: 3,
            ..VaeConfig::new(Shape::hwc(2, 2, 3))
        }
    }

    #[test]
    fn normalizer_min_max() {
        let frames = vec![
            ActivationTensor::new(Shape::flat(2), vec![0.0f64, 3.0]).unwrap(),
            ActivationTensor::new(Shape::flat(2), vec![8.5, 1.0]).unwrap(),
        ];
        let d = EavesdropDataset::from_frames(frames).unwrap();
        let n = Normalizer::fit(&d).unwrap();
        assert_eq!((n.min, n.max), (0.0, 8.5));
        for s in d.samples() {
            for &v in s.values() {
                let u = n.normalize(v);
                assert!((0.0..=1.0).contains(&u));
                assert!((n.denormalize(u) - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn normalizer_rejects_constant_data() {
        let d = EavesdropDataset::from_frames(vec![ActivationTensor::<f32>::zeros(Shape::flat(4)); 3]).unwrap();
        assert!(matches!(Normalizer::fit(&d), Err(Error::DegenerateRange(_))));
    }

    #[test]
    fn config_invariants() {
        let mut c = toy_config();
        c.latent_dim = 1;
        assert!(c.validate().is_err());
        let mut c = toy_config();
        c.hidden_size = 3;
        assert!(c.validate().is_err());
        assert_eq!(VaeConfig::new(Shape::flat(4)).hidden_size, 1000);
        assert_eq!(VaeConfig::new(Shape::flat(4)).latent_dim, 32);
        let deep = VaeConfig { hidden_size: 256, depth: 3, latent_dim: 32, ..toy_config() };
        assert_eq!(deep.hidden_widths(), vec![256, 128, 64]);
        assert!(deep.validate().is_ok());
        assert!(VaeConfig { depth: 5, ..deep.clone() }.validate().is_err());
        assert!(VaeConfig { depth: 0, ..deep }.validate().is_err());
    }

    #[test]
    fn too_few_samples() {
        let d = toy_dataset(8, 1);
        assert!(matches!(train_vae(&d, &toy_config()), Err(Error::Precondition(_))));
    }

    #[test]
    fn shape_mismatch() {
        let d = toy_dataset(40, 1);
        let mut c = toy_config();
        c.input_shape = Shape::hwc(3, 2, 2);
        assert!(matches!(train_vae(&d, &c), Err(Error::Shape { .. })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradients(VaeConfig { kl_weight: 0.7, ..toy_config() });
    }

    #[test]
    fn deep_gradients_match_finite_differences() {
        check_gradients(VaeConfig { kl_weight: 0.3, depth: 3, ..toy_config() });
    }

    fn check_gradients(cfg: VaeConfig) {
        let d = toy_dataset(5, 2);
        let beta = cfg.kl_weight;
        let vae = VaeModel::init(cfg, Normalizer::fit(&d).unwrap()).unwrap();
        let x = vae.normalize_batch(d.to_matrix().view());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let eps = Array2::from_shape_simple_fn((5, 4), || rng.random_range(-1.0..1.0));
        let loss = |v: &VaeModel<f64>| {
            let (r, k, _) = v.batch_gradients(&x, &eps);
            (r + beta * k) / 5.0
        };
        let (_, _, grads) = vae.batch_gradients(&x, &eps);
        let h = 1e-6;
        for (p, g) in grads.iter().enumerate() {
            for i in (0..g.len()).step_by(13) {
                let mut plus = vae.clone();
                plus.layers_mut().into_iter().flat_map(|d| d.params_mut()).nth(p).unwrap()[i] += h;
                let mut minus = vae.clone();
                minus.layers_mut().into_iter().flat_map(|d| d.params_mut()).nth(p).unwrap()[i] -= h;
                let num = (loss(&plus) - loss(&minus)) / (2.0 * h);
                assert!((num - g[i]).abs() < 1e-5 * (1.0 + num.abs()), "param {p}[{i}]: {num} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn training_descends_and_is_deterministic() {
        let d = toy_dataset(200, 4);
        let a = train_vae(&d, &toy_config()).unwrap();
        let trace = a.loss_trace();
        assert_eq!(trace.len(), 60);
        assert!(trace.last().unwrap().total < trace[0].total);
        let b = train_vae(&d, &toy_config()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn encode_noise_modes() {
        let d = toy_dataset(64, 5);
        let vae = train_vae(&d, &VaeConfig { epochs: 2, ..toy_config() }).unwrap();
        let h = &d.samples()[0];
        let zero = vae.encode(h, Noise::Zero).unwrap();
        assert_eq!(zero.z, zero.mu);
        let s1 = vae.encode(h, Noise::Sample { seed: 9 }).unwrap();
        let s2 = vae.encode(h, Noise::Sample { seed: 9 }).unwrap();
        assert_eq!(s1, s2);
        assert_ne!(s1.z, s1.mu);
        let wrong = ActivationTensor::<f64>::zeros(Shape::hwc(3, 2, 2));
        assert!(matches!(vae.encode(&wrong, Noise::Zero), Err(Error::Shape { .. })));
    }

    #[test]
    fn decode_range_and_dimension() {
        let d = toy_dataset(64, 6);
        let vae = train_vae(&d, &VaeConfig { epochs: 2, ..toy_config() }).unwrap();
        let out = vae.decode_normalized(&[3.0, -2.0, 0.5, 9.0]).unwrap();
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        let act = vae.decode(&[3.0, -2.0, 0.5, 9.0]).unwrap();
        let n = vae.normalizer();
        assert!(act.values().iter().all(|v| *v >= n.min - 1e-12 && *v <= n.max + 1e-12));
        assert!(matches!(vae.decode(&[0.0; 5]), Err(Error::Dimension { .. })));
    }
}
