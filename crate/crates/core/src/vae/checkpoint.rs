//! VAE checkpoint directory: `vae.json` (config, normalization stats, loss
//! trace) plus one little-endian f32 blob per dense layer.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochLoss, Normalizer, VaeConfig, VaeModel};
use crate::blob::{fill_params, read_f32_blob, write_f32_blob};
use crate::error::Result;
use crate::scalar::Scalar;

pub const VAE_MANIFEST: &str = "vae.json";

/// Blob file names in `layers()` order.
fn blob_names(depth: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..depth).map(|i| format!("enc_hidden_{i}.bin")).collect();
    names.extend(["enc_mu.bin".into(), "enc_logvar.bin".into()]);
    names.extend((0..depth).map(|i| format!("dec_hidden_{i}.bin")));
    names.push("dec_out.bin".into());
    names
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VaeManifest {
    config: VaeConfig,
    normalizer: Normalizer<f64>,
    loss_trace: Vec<EpochLoss>,
    blobs: Vec<String>,
}

impl<T: Scalar> VaeModel<T> {
    /// Writes the checkpoint; refuses to overwrite an existing one.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let names = blob_names(self.config.depth);
        for (name, layer) in names.iter().zip(self.layers()) {
            write_f32_blob(&dir.join(name), &layer.params())?;
        }
        let manifest = VaeManifest {
            config: self.config.clone(),
            normalizer: Normalizer {
                min: self.normalizer.min.as_f64(),
                max: self.normalizer.max.as_f64(),
            },
            loss_trace: self.loss_trace.clone(),
            blobs: names,
        };
        let mut f = fs::OpenOptions::new().write(true).create_new(true).open(dir.join(VAE_MANIFEST))?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m: VaeManifest = serde_json::from_slice(&fs::read(dir.join(VAE_MANIFEST))?)?;
        let normalizer = Normalizer {
            min: T::c(m.normalizer.min),
            max: T::c(m.normalizer.max),
        };
        let mut vae = VaeModel::init(m.config, normalizer)?;
        if m.blobs != blob_names(vae.config.depth) {
            return Err(crate::error::Error::Format(format!("unexpected VAE blob list {:?}", m.blobs)));
        }
        for (name, layer) in m.blobs.iter().zip(vae.layers_mut()) {
            fill_params(layer.params_mut(), read_f32_blob(&dir.join(name))?, name)?;
        }
        vae.loss_trace = m.loss_trace;
        Ok(vae)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::tests::{toy_config, toy_dataset};
    use crate::vae::train_vae;

    #[test]
    fn f32_checkpoint_round_trip_is_exact() {
        let d64 = toy_dataset(64, 1);
        let frames = d64
            .samples()
            .iter()
            .map(|s| {
                crate::tensor::ActivationTensor::new(s.shape().clone(), s.values().iter().map(|v| *v as f32).collect())
                    .unwrap()
            })
            .collect();
        let d = crate::channel::EavesdropDataset::from_frames(frames).unwrap();
        let vae = train_vae::<f32>(&d, &super::VaeConfig { epochs: 3, depth: 2, ..toy_config() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        vae.save(dir.path()).unwrap();
        let back = VaeModel::<f32>::load(dir.path()).unwrap();
        assert_eq!(back, vae);
        assert!(vae.save(dir.path()).is_err());
    }
}
