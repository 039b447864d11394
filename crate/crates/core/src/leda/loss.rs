use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::config::{DiscreteGrad, LedaMode};
use super::encoder::LatentEncoder;
use crate::autoencoder::mse;
use crate::codebook::{quantize_batch, straight_through};
use crate::error::{Error, Result};
use crate::nn::scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LedaLossReport {
    pub mse: f64,
    pub continuous: f64,
    pub discrete: f64,
    pub total: f64,
}

impl LedaLossReport {
    pub fn non_finite(&self) -> Option<&'static str> {
        [
            ("mse", self.mse),
            ("continuous", self.continuous),
            ("discrete", self.discrete),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Image MSE plus `lambda` times the continuous latent distance and the
/// distance between finest cumulative quantized embeddings, each included
/// according to `mode`. Gradients reach `y_hat` only; `y` is treated as a
/// constant target.
pub fn leda_loss(
    y: &Tensor,
    y_hat: &Tensor,
    ae: &dyn LatentEncoder,
    lambda: f64,
    mode: LedaMode,
    discrete_grad: DiscreteGrad,
) -> Result<(Tensor, LedaLossReport)> {
    ae.ensure_frozen()?;
    if y.dims() != y_hat.dims() {
        return Err(Error::Shape(format!(
            "target {:?} vs denoised {:?}",
            y.dims(),
            y_hat.dims()
        )));
    }
    let y = y.detach();
    let image = mse(y_hat, &y)?;
    let z = ae.encode(&y)?.detach();
    let z_hat = ae.encode(y_hat)?;
    let continuous = mse(&z_hat, &z)?;

    let ids: Vec<String> = (0..z.dims()[0]).map(|i| i.to_string()).collect();
    let q = quantize_batch(&z, &ids, ae.codebook(), ae.geometry())?;
    let q_hat = quantize_batch(&z_hat, &ids, ae.codebook(), ae.geometry())?;
    let zq_hat = match discrete_grad {
        DiscreteGrad::StraightThrough => straight_through(&z_hat, q_hat.finest())?,
        DiscreteGrad::Detached => q_hat.finest().clone(),
    };
    let discrete = mse(&zq_hat, q.finest())?;

    let mut total = image.clone();
    if mode.uses_continuous() {
        total = (total + (&continuous * lambda)?)?;
    }
    if mode.uses_discrete() {
        total = (total + (&discrete * lambda)?)?;
    }
    let report = LedaLossReport {
        mse: scalar(&image)?,
        continuous: scalar(&continuous)?,
        discrete: scalar(&discrete)?,
        total: scalar(&total)?,
    };
    Ok((total, report))
}
