//! Split-inference attack laboratory.
//!
//! A classifier is cut into a device-side head and a server-side tail; the
//! intermediate activation crosses a simulated channel where a passive tap
//! collects it and an active tap can replace it with a VAE-generated
//! activation obtained by latent-space interpolation.
//!
//! Numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix the `f32` instantiation used by the pipeline and CLI.

pub mod channel;
pub mod data;
mod blob;
pub mod error;
pub mod eval;
pub mod feasibility;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod tensor;
pub mod vae;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{ActivationTensor, Shape, Tensor};

pub type Classifier = model::Classifier<f32>;
pub type ModelPartition = model::ModelPartition<f32>;
pub type ClassificationResult = model::ClassificationResult<f32>;
pub type LabeledImages = data::LabeledImages<f32>;
pub type Activation = ActivationTensor<f32>;
pub type EavesdropDataset = channel::EavesdropDataset<f32>;
pub type Vae = vae::VaeModel<f32>;
pub type LatentPool = vae::LatentPool<f32>;
pub type LatentCode = vae::LatentCode<f32>;
pub type FeatureMatrix = feasibility::FeatureMatrix<f32>;
