//! Vector-quantized CT autoencoder over a frozen language-model codebook,
//! and a dual-space alignment loss for training low-dose CT denoisers.

pub mod autoencoder;
pub mod cli;
pub mod codebook;
pub mod config;
pub mod ctdata;
pub mod error;
pub mod explain;
pub mod history;
pub mod leda;
pub mod metrics;
pub mod nn;
pub mod scorer;

pub use error::{Error, ErrorCategory, Result};
