//! Checkpoint directory: `manifest.json` plus one little-endian f32 blob per
//! parameterized layer, `layer_<index>.bin`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_model, Classifier, ModelSpec};
use crate::blob::{fill_params, read_f32_blob, write_f32_blob};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    #[serde(flatten)]
    pub spec: ModelSpec,
    /// `(layer index, file name, float count)` for every parameter blob.
    pub blobs: Vec<(usize, String, usize)>,
}

pub(crate) fn blob_name(index: usize) -> String {
    format!("layer_{index:02}.bin")
}

impl<T: Scalar> Classifier<T> {
    /// Writes a checkpoint into `dir`, refusing to overwrite an existing one.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut blobs = Vec::new();
        for (spec, layer) in self.spec.layers.iter().zip(&self.layers) {
            let params = layer.params();
            if params.is_empty() {
                continue;
            }
            let name = blob_name(spec.index);
            write_f32_blob(&dir.join(&name), &params)?;
            blobs.push((spec.index, name, layer.param_count()));
        }
        let manifest = ModelManifest { spec: self.spec.clone(), blobs };
        let mut f = fs::OpenOptions::new().write(true).create_new(true).open(dir.join(MANIFEST))?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: ModelManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
        let mut model: Classifier<T> = build_model(&manifest.spec.architecture, manifest.spec.seed)?;
        if model.spec.layers != manifest.spec.layers {
            return Err(Error::Format("manifest layer list does not match its architecture".into()));
        }
        for (index, name, count) in &manifest.blobs {
            let values = read_f32_blob(&dir.join(name))?;
            let layer = index
                .checked_sub(1)
                .and_then(|i| model.layers.get_mut(i))
                .ok_or_else(|| Error::Format(format!("blob for unknown layer {index}")))?;
            if layer.param_count() != *count {
                return Err(Error::Format(format!(
                    "{name}: manifest declares {count} floats, layer holds {}",
                    layer.param_count()
                )));
            }
            fill_params(layer.params_mut(), values, name)?;
        }
        model.spec = manifest.spec;
        Ok(model)
    }
}
