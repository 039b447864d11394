use candle_core::{DType, Device, Tensor};

use super::config::AutoencoderConfig;
use crate::error::{Error, Result};
use crate::nn::{leaky_relu, upsample2x, AttnBlock, Conv2d, GroupNorm, Init, ParamStore, ResBlock};

#[derive(Debug, Clone)]
struct Level {
    res: Vec<ResBlock>,
    resample: Conv2d,
}

#[derive(Debug, Clone)]
struct Mid {
    blocks: Vec<(ResBlock, AttnBlock)>,
}

impl Mid {
    fn new(ps: &mut ParamStore, name: &str, channels: usize, pairs: usize, groups: usize) -> Result<Self> {
        let blocks = (0..pairs)
            .map(|k| {
                Ok((
                    ResBlock::new(ps, &format!("{name}.{k}.res"), channels, channels, groups)?,
                    AttnBlock::new(ps, &format!("{name}.{k}.attn"), channels, groups)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self { blocks })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (res, attn) in &self.blocks {
            h = attn.forward(&res.forward(&h)?)?;
        }
        Ok(h)
    }
}

/// Convolutional encoder: `(N, 1, H, W)` windowed images to
/// `(N, d, H/f, W/f)` latents.
#[derive(Debug, Clone)]
pub struct Encoder {
    downsample: usize,
    conv_in: Conv2d,
    levels: Vec<Level>,
    mid: Mid,
    norm_out: GroupNorm,
    conv_out: Conv2d,
}

impl Encoder {
    pub fn new(ps: &mut ParamStore, cfg: &AutoencoderConfig) -> Result<Self> {
        let g = cfg.norm_groups;
        let conv_in = Conv2d::new(ps, "encoder.conv_in", 1, cfg.channels_at(0), 3, 1, 1)?;
        let mut levels = Vec::new();
        for i in 0..cfg.levels() {
            let c = cfg.channels_at(i);
            let res = (0..cfg.res_blocks)
                .map(|j| ResBlock::new(ps, &format!("encoder.down.{i}.res.{j}"), c, c, g))
                .collect::<Result<_>>()?;
            let resample = Conv2d::new(ps, &format!("encoder.down.{i}.conv"), c, cfg.channels_at(i + 1), 3, 2, 1)?;
            levels.push(Level { res, resample });
        }
        let top = cfg.channels_at(cfg.levels());
        Ok(Self {
            downsample: cfg.downsample,
            conv_in,
            levels,
            mid: Mid::new(ps, "encoder.mid", top, cfg.attn_blocks, g)?,
            norm_out: GroupNorm::new(ps, "encoder.norm_out", top, g)?,
            conv_out: Conv2d::new(ps, "encoder.conv_out", top, cfg.latent_dim, 3, 1, 1)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        if c != 1 || h % self.downsample != 0 || w % self.downsample != 0 {
            return Err(Error::Shape(format!(
                "encoder expects (N, 1, H, W) with H and W divisible by {}, got {:?}",
                self.downsample,
                x.dims()
            )));
        }
        let mut h = self.conv_in.forward(x)?;
        for level in &self.levels {
            for r in &level.res {
                h = r.forward(&h)?;
            }
            h = level.resample.forward(&h)?;
        }
        h = self.mid.forward(&h)?;
        self.conv_out.forward(&self.norm_out.forward(&h)?.silu()?)
    }
}

/// Mirror of the encoder ending in a sigmoid, so outputs lie in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Decoder {
    latent_dim: usize,
    conv_in: Conv2d,
    mid: Mid,
    levels: Vec<Level>,
    norm_out: GroupNorm,
    conv_out: Conv2d,
}

impl Decoder {
    pub fn new(ps: &mut ParamStore, cfg: &AutoencoderConfig) -> Result<Self> {
        let g = cfg.norm_groups;
        let top = cfg.channels_at(cfg.levels());
        let conv_in = Conv2d::new(ps, "decoder.conv_in", cfg.latent_dim, top, 3, 1, 1)?;
        let mid = Mid::new(ps, "decoder.mid", top, cfg.attn_blocks, g)?;
        let mut levels = Vec::new();
        for i in (0..cfg.levels()).rev() {
            let c = cfg.channels_at(i);
            let resample = Conv2d::new(ps, &format!("decoder.up.{i}.conv"), cfg.channels_at(i + 1), c, 3, 1, 1)?;
            let res = (0..cfg.res_blocks)
                .map(|j| ResBlock::new(ps, &format!("decoder.up.{i}.res.{j}"), c, c, g))
                .collect::<Result<_>>()?;
            levels.push(Level { res, resample });
        }
        let c0 = cfg.channels_at(0);
        Ok(Self {
            latent_dim: cfg.latent_dim,
            conv_in,
            mid,
            levels,
            norm_out: GroupNorm::new(ps, "decoder.norm_out", c0, g)?,
            conv_out: Conv2d::new(ps, "decoder.conv_out", c0, 1, 3, 1, 1)?,
        })
    }

    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        let (_, c, _, _) = z.dims4()?;
        if c != self.latent_dim {
            return Err(Error::Shape(format!(
                "decoder expects {} latent channels, got {:?}",
                self.latent_dim,
                z.dims()
            )));
        }
        let mut h = self.mid.forward(&self.conv_in.forward(z)?)?;
        for level in &self.levels {
            h = level.resample.forward(&upsample2x(&h)?)?;
            for r in &level.res {
                h = r.forward(&h)?;
            }
        }
        let out = self.conv_out.forward(&self.norm_out.forward(&h)?.silu()?)?;
        Ok(candle_nn::ops::sigmoid(&out)?)
    }
}

/// Encoder and decoder sharing one parameter store.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub config: AutoencoderConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl Autoencoder {
    pub fn new(ps: &mut ParamStore, config: &AutoencoderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            encoder: Encoder::new(ps, config)?,
            decoder: Decoder::new(ps, config)?,
        })
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.encoder.forward(x)
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        self.decoder.forward(z)
    }
}

/// Four-layer strided patch discriminator producing a grid of logits.
#[derive(Debug, Clone)]
pub struct Discriminator {
    convs: [Conv2d; 4],
}

impl Discriminator {
    pub fn new(ps: &mut ParamStore, channels: usize) -> Result<Self> {
        let c = channels;
        Ok(Self {
            convs: [
                Conv2d::new(ps, "disc.0", 1, c, 4, 2, 1)?,
                Conv2d::new(ps, "disc.1", c, 2 * c, 4, 2, 1)?,
                Conv2d::new(ps, "disc.2", 2 * c, 4 * c, 4, 1, 1)?,
                Conv2d::new(ps, "disc.3", 4 * c, 1, 4, 1, 1)?,
            ],
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for conv in &self.convs[..3] {
            h = leaky_relu(&conv.forward(&h)?, 0.2)?;
        }
        self.convs[3].forward(&h)
    }
}

/// Feature extractor behind the perceptual loss. Swap in a pretrained
/// network by implementing this trait.
pub trait FeatureNet: Send + Sync {
    /// Feature maps of `(N, 1, H, W)` images, one tensor per stage.
    fn features(&self, x: &Tensor) -> Result<Vec<Tensor>>;
}

/// Fixed random convolutional stack: four stages, each halving resolution
/// after the first. Its weights are constants and never train.
#[derive(Debug, Clone)]
pub struct RandomFeatureNet {
    stages: Vec<Conv2d>,
}

impl RandomFeatureNet {
    pub fn new(channels: usize, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        let mut ps = ParamStore::seeded(seed, dtype, device);
        let widths = [channels, 2 * channels, 4 * channels, 4 * channels];
        let mut stages = Vec::new();
        let mut c_in = 1;
        for (i, &c) in widths.iter().enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            let std = (2.0 / (c_in * 9) as f64).sqrt();
            let weight = ps.get(&format!("feat.{i}.weight"), &[c, c_in, 3, 3], Init::Normal(std))?;
            stages.push(Conv2d::from_tensors(weight.detach(), None, stride, 1));
            c_in = c;
        }
        Ok(Self { stages })
    }
}

impl FeatureNet for RandomFeatureNet {
    fn features(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut h = x.clone();
        let mut out = Vec::with_capacity(self.stages.len());
        for conv in &self.stages {
            h = conv.forward(&h)?.relu()?;
            out.push(h.clone());
        }
        Ok(out)
    }
}
