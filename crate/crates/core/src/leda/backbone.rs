use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::nn::{Conv2d, ParamStore};

/// Residual encoder-decoder CNN: five convolutions, five stride-1
/// transposed convolutions (expressed as same-padded convolutions, which
/// span the same function class) and two long skip connections. The last
/// layer predicts the noise and starts at zero, so an untrained network
/// returns its input.
#[derive(Debug, Clone)]
pub struct RedCnn {
    convs: Vec<Conv2d>,
    deconvs: Vec<Conv2d>,
}

impl RedCnn {
    pub fn new(ps: &mut ParamStore, width: usize) -> Result<Self> {
        let mut convs = Vec::with_capacity(5);
        for i in 0..5 {
            let c_in = if i == 0 { 1 } else { width };
            convs.push(Conv2d::new(ps, &format!("denoiser.conv.{i}"), c_in, width, 3, 1, 1)?);
        }
        let mut deconvs = Vec::with_capacity(5);
        for i in 0..4 {
            deconvs.push(Conv2d::new(ps, &format!("denoiser.deconv.{i}"), width, width, 3, 1, 1)?);
        }
        deconvs.push(Conv2d::zeroed(ps, "denoiser.deconv.4", width, 1, 3, 1)?);
        Ok(Self { convs, deconvs })
    }

    /// Noise estimate for `(N, 1, H, W)` inputs.
    pub fn noise(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, _, _) = x.dims4()?;
        if c != 1 {
            return Err(Error::Shape(format!("denoiser expects one channel, got {:?}", x.dims())));
        }
        let c = &self.convs;
        let d = &self.deconvs;
        let h = c[0].forward(x)?.relu()?;
        let skip2 = c[1].forward(&h)?.relu()?;
        let h = c[2].forward(&skip2)?.relu()?;
        let skip3 = c[3].forward(&h)?.relu()?;
        let h = c[4].forward(&skip3)?.relu()?;
        let h = (d[0].forward(&h)? + skip3)?.relu()?;
        let h = d[1].forward(&h)?.relu()?;
        let h = (d[2].forward(&h)? + skip2)?.relu()?;
        let h = d[3].forward(&h)?.relu()?;
        d[4].forward(&h)
    }

    /// `clamp(x - noise(x), 0, 1)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok((x - self.noise(x)?)?.clamp(0.0, 1.0)?)
    }
}
