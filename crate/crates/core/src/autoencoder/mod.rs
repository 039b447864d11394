//! The CT autoencoder quantized onto the frozen codebook: networks, losses
//! and the training loop.

mod config;
mod loss;
mod model;
mod train;

pub use config::AutoencoderConfig;
pub use loss::{
    commit_loss, constant, dynamic_weight, hinge_discriminator_loss, hinge_generator_loss, mse, perceptual_loss,
    semantic_loss, total_loss, LossReport, VqganTerms, OMEGA_EPS,
};
pub use model::{Autoencoder, Decoder, Discriminator, Encoder, FeatureNet, RandomFeatureNet};
pub use train::{
    perceptual_seed, train_autoencoder, AeDataset, AeHistoryRow, AeSample, AeStepOutput, AeTrainOutput, AeTrainer,
    AE_CHECKPOINT,
};
pub(crate) use train::{common_side, stack_images};

use crate::error::{Error, Result};
use crate::nn::TensorArchive;

/// Rebuilds the configuration echoed into an autoencoder checkpoint.
pub fn config_from_archive(archive: &TensorArchive) -> Result<AutoencoderConfig> {
    match archive.meta.get("kind").map(String::as_str) {
        Some("autoencoder") => {}
        other => {
            return Err(Error::format(
                "checkpoint",
                format!("expected an autoencoder checkpoint, found kind {other:?}"),
            ))
        }
    }
    let entries = archive
        .meta
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("config.autoencoder.").map(|k| (k, v.as_str())));
    AutoencoderConfig::from_kv("desk", entries)
}
