//! Denoiser training against a frozen autoencoder with a loss that aligns
//! denoised and normal-dose images in both continuous-latent and
//! quantized-embedding space.

mod backbone;
mod config;
mod encoder;
mod loss;
mod train;

pub use backbone::RedCnn;
pub use config::{DenoiserConfig, DiscreteGrad, LedaMode};
pub use encoder::{FrozenAutoencoder, IdentityAutoencoder, LatentEncoder};
pub use loss::{leda_loss, LedaLossReport};
pub use train::{
    assert_no_encoder_grad, train_denoiser, Denoiser, DenoiserDataset, DenoiserHistoryRow, DenoiserSample,
    DenoiserStepOutput, DenoiserTrainOutput, DenoiserTrainer, DENOISER_CHECKPOINT,
};
