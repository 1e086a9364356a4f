use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::s;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::latent::{pairwise_distance, DistanceMode, Interpolation, LatentCode};
use super::{Noise, VaeModel};
use crate::channel::EavesdropDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ActivationTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Attack strength: 0 keeps the original latent, 1 substitutes the target.
    pub alpha: f64,
    pub interpolation: Interpolation,
    /// Number of farthest pool codes the target is drawn from.
    pub target_pool_size: usize,
    pub distance: DistanceMode,
    pub seed: u64,
    /// Std-dev of Gaussian noise added to the interpolated latent; 0 disables.
    #[serde(default)]
    pub noise_stddev: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            interpolation: Interpolation::Lerp,
            target_pool_size: 10,
            distance: DistanceMode::SymmetricGaussianKl,
            seed: 0,
            noise_stddev: 0.0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.target_pool_size == 0 {
            return Err(Error::Config("target_pool_size must be at least 1".into()));
        }
        if !(self.noise_stddev >= 0.0) {
            return Err(Error::Config("noise_stddev must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha, ..self.clone() }
    }
}

/// Zero-noise encodings of every `D_h` sample, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPool<T> {
    latent_dim: usize,
    codes: Vec<LatentCode<T>>,
}

impl<T: Scalar> LatentPool<T> {
    pub fn new(latent_dim: usize, codes: Vec<LatentCode<T>>) -> Result<Self> {
        for c in &codes {
            if c.dim() != latent_dim || c.logvar.len() != latent_dim {
                return Err(Error::Dimension {
                    left: latent_dim,
                    right: c.dim(),
                });
            }
        }
        Ok(Self { latent_dim, codes })
    }

    pub fn from_dataset(vae: &VaeModel<T>, dataset: &EavesdropDataset<T>) -> Result<Self> {
        let x = dataset.to_matrix();
        let mut codes = Vec::with_capacity(dataset.len());
        let mut start = 0;
        while start < x.nrows() {
            let end = (start + 256).min(x.nrows());
            let (mu, logvar) = vae.encode_batch(x.slice(s![start..end, ..]))?;
            for (m, lv) in mu.rows().into_iter().zip(logvar.rows()) {
                codes.push(LatentCode::from_mean(m.to_vec(), lv.to_vec()));
            }
            start = end;
        }
        Self::new(vae.latent_dim(), codes)
    }

    pub fn codes(&self) -> &[LatentCode<T>] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// `.latents` layout: `u32 count, u32 latent_dim`, then per code its
    /// `mu` vector followed by its `logvar` vector, all little-endian f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.codes.len() * self.latent_dim * 8);
        out.extend_from_slice(&(self.codes.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.latent_dim as u32).to_le_bytes());
        for c in &self.codes {
            for v in c.mu.iter().chain(&c.logvar) {
                out.extend_from_slice(&v.as_f32().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Truncated { needed: 8, available: bytes.len() });
        }
        let count = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let needed = 8 + count * dim * 8;
        if bytes.len() != needed {
            return Err(Error::Truncated { needed, available: bytes.len() });
        }
        let floats: Vec<T> = bytes[8..]
            .chunks_exact(4)
            .map(|c| T::from_f32_lossy(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        let codes = floats
            .chunks_exact(2 * dim.max(1))
            .take(count)
            .map(|c| LatentCode::from_mean(c[..dim].to_vec(), c[dim..].to_vec()))
            .collect();
        Self::new(dim, codes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::OpenOptions::new().write(true).create_new(true).open(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Indices of the `k` pool codes farthest from `origin`, farthest first.
/// Equal distances keep pool order.
pub fn top_k_indices<T: Scalar>(
    origin: &LatentCode<T>,
    pool: &[LatentCode<T>],
    k: usize,
    mode: DistanceMode,
) -> Result<Vec<usize>> {
    if k == 0 || pool.len() < k {
        return Err(Error::Precondition(format!(
            "target pool of {} cannot supply {k} candidates",
            pool.len()
        )));
    }
    let mut scored = pool
        .iter()
        .enumerate()
        .map(|(i, c)| pairwise_distance(origin, c, mode).map(|d| (i, d)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    Ok(scored.into_iter().take(k).map(|(i, _)| i).collect())
}

/// Draws the target uniformly from the `target_pool_size` codes farthest
/// from `origin`, using a generator seeded with `config.seed`.
pub fn select_target<'a, T: Scalar>(
    origin: &LatentCode<T>,
    pool: &'a [LatentCode<T>],
    config: &AttackConfig,
) -> Result<&'a LatentCode<T>> {
    let candidates = top_k_indices(origin, pool, config.target_pool_size, config.distance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(&pool[candidates[rng.random_range(0..candidates.len())]])
}

/// Per-frame seed: `seed` mixed with a hash of the frame's values, so each
/// intercepted activation gets its own reproducible draw.
pub fn frame_seed<T: Scalar>(seed: u64, h: &ActivationTensor<T>) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for v in h.values() {
        hash ^= v.as_f64().to_bits();
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer
    let mut z = hash ^ seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// encode (zero noise) -> select target -> interpolate -> decode.
pub fn generate_adversarial<T: Scalar>(
    vae: &VaeModel<T>,
    h: &ActivationTensor<T>,
    pool: &LatentPool<T>,
    config: &AttackConfig,
) -> Result<ActivationTensor<T>> {
    config.validate()?;
    if pool.latent_dim() != vae.latent_dim() {
        return Err(Error::Dimension {
            left: vae.latent_dim(),
            right: pool.latent_dim(),
        });
    }
    let origin = vae.encode(h, Noise::Zero)?;
    let seed = frame_seed(config.seed, h);
    let target = select_target(&origin, pool.codes(), &AttackConfig { seed, ..config.clone() })?;
    let mut z = config.interpolation.apply(&origin.z, &target.z, T::c(config.alpha))?;
    if config.noise_stddev > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x006e_6f69_7365);
        let normal = Normal::new(0.0, config.noise_stddev).map_err(|e| Error::Config(e.to_string()))?;
        for v in z.iter_mut() {
            *v += T::c(normal.sample(&mut rng));
        }
    }
    let out = vae.decode(&z)?;
    Ok(match h.source_layer() {
        Some(l) => out.with_source_layer(l),
        None => out,
    })
}
